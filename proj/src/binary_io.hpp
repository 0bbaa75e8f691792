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

#ifndef XMJOIN_SRC_BINARY_IO_HPP
#define XMJOIN_SRC_BINARY_IO_HPP

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "xmjoin/errors.hpp"

namespace xmjoin::detail
{
/// Little-endian byte sink for index and map files (host order is little-endian).
class ByteWriter
{
 public:
  void Magic(std::string_view magic) { bytes_.insert(bytes_.end(), magic.begin(), magic.end()); }

  template <class T>
  void Put(T value)
  {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto *p = reinterpret_cast<const char *>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }

  void Pad(std::size_t count) { bytes_.insert(bytes_.end(), count, '\0'); }

  void Save(const std::filesystem::path &path) const
  {
    std::ofstream out{path, std::ios::binary | std::ios::trunc};
    if (!out) throw IoError("cannot create '" + path.string() + "'");
    out.write(bytes_.data(), static_cast<std::streamsize>(bytes_.size()));
    if (!out) throw IoError("write failed on '" + path.string() + "'");
  }

  [[nodiscard]] std::size_t size() const { return bytes_.size(); }

 private:
  std::vector<char> bytes_{};
};

class ByteReader
{
 public:
  explicit ByteReader(const std::filesystem::path &path) : path_{path}
  {
    std::ifstream in{path, std::ios::binary};
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    bytes_.assign(std::istreambuf_iterator<char>{in}, std::istreambuf_iterator<char>{});
  }

  void ExpectMagic(std::string_view magic)
  {
    Need(magic.size());
    if (std::string_view{bytes_.data() + pos_, magic.size()} != magic) {
      throw FormatError("bad magic in '" + path_.string() + "': expected " + std::string{magic});
    }
    pos_ += magic.size();
  }

  template <class T>
  T Get()
  {
    static_assert(std::is_trivially_copyable_v<T>);
    Need(sizeof(T));
    T value{};
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  void Skip(std::size_t count)
  {
    Need(count);
    pos_ += count;
  }

  [[nodiscard]] std::size_t remaining() const { return bytes_.size() - pos_; }
  [[nodiscard]] const std::filesystem::path &path() const { return path_; }

 private:
  void Need(std::size_t count) const
  {
    if (bytes_.size() - pos_ < count) {
      throw FormatError("truncated file '" + path_.string() + "'");
    }
  }

  std::filesystem::path path_;
  std::vector<char> bytes_{};
  std::size_t pos_{0};
};

}  // namespace xmjoin::detail

#endif  // XMJOIN_SRC_BINARY_IO_HPP
