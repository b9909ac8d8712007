// include/hia/error.hpp

// Copyright 2026  HIA Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef HIA_ERROR_HPP_
#define HIA_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <utility>

namespace hia {

// Failure taxonomy shared by every module.  The CLI maps kinds to exit
// codes: bad inputs (config, validation, parse, lookup, dimension) exit
// with 2, failures at run time (contract, numeric, io) exit with 3.
enum class ErrorKind {
  config,      // bad configuration value
  validation,  // bad user-supplied data (schema, ranges, missing file)
  parse,       // malformed file content
  lookup,      // unknown id or name
  dimension,   // shape mismatch
  contract,    // API misuse (programmer error)
  numeric,     // NaN/Inf or numeric divergence
  io,          // failed read/write after open
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string msg)
      : std::runtime_error(std::move(msg)), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
  throw Error(kind, msg);
}

}  // namespace hia

#endif  // HIA_ERROR_HPP_
