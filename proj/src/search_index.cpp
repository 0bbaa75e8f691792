/*
 * Copyright 2026 The xmjoin Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "xmjoin/search_index.hpp"

#include <array>
#include <fstream>

#include "xmjoin/btree_index.hpp"
#include "xmjoin/errors.hpp"
#include "xmjoin/pla_index.hpp"
#include "xmjoin/table_store.hpp"

namespace xmjoin
{
std::uint64_t
WindowSpanBlocks(std::uint64_t window)
{
  if (window <= 1) return 1;
  return (window - 1 + kTuplesPerBlock - 1) / kTuplesPerBlock + 1;
}

std::unique_ptr<SearchIndex>
LoadIndex(const std::string &path)
{
  std::array<char, 4> magic{};
  {
    std::ifstream in{path, std::ios::binary};
    if (!in) throw IoError("cannot open '" + path + "'");
    in.read(magic.data(), magic.size());
    if (in.gcount() != static_cast<std::streamsize>(magic.size())) {
      throw FormatError("truncated file '" + path + "'");
    }
  }
  const std::string tag{magic.begin(), magic.end()};
  if (tag == "PLAI") return std::make_unique<PlaIndex>(PlaIndex::Deserialize(path));
  if (tag == "BTPI") return std::make_unique<PivotBtree>(PivotBtree::Deserialize(path));
  throw FormatError("bad magic in '" + path + "': not an index file");
}

}  // namespace xmjoin
