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

#ifndef XMJOIN_ERRORS_HPP
#define XMJOIN_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace xmjoin
{
/// Malformed file contents (bad header, magic, version, or length).
class FormatError : public std::runtime_error
{
 public:
  using std::runtime_error::runtime_error;
};

/// Failed system call; the message carries the path and errno text.
class IoError : public std::runtime_error
{
 public:
  using std::runtime_error::runtime_error;
};

/// Rank range outside a table.
class BoundsError : public std::out_of_range
{
 public:
  using std::out_of_range::out_of_range;
};

/// A caller broke an operation's precondition.
class ContractError : public std::invalid_argument
{
 public:
  using std::invalid_argument::invalid_argument;
};

/// Bad command-line level request (unknown kind, missing index for a method).
class UsageError : public ContractError
{
 public:
  using ContractError::ContractError;
};

/// A configured memory budget was exceeded.
class ResourceError : public std::runtime_error
{
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace xmjoin

#endif  // XMJOIN_ERRORS_HPP
