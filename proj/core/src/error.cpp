// Copyright 2026 The com2s Authors
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

#include "com2s/error.hpp"

namespace com2s {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::validation: return "validation error";
    case ErrorKind::format: return "format error";
    case ErrorKind::length: return "length error";
    case ErrorKind::parse: return "parse error";
    case ErrorKind::config: return "configuration error";
    case ErrorKind::lexicon: return "lexicon error";
    case ErrorKind::insufficient_data: return "insufficient data";
    case ErrorKind::degenerate_channel: return "degenerate channel";
    case ErrorKind::undefined: return "undefined";
    case ErrorKind::unsupported_format: return "unsupported format";
    case ErrorKind::io: return "i/o error";
  }
  return "error";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace com2s
