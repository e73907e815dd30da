// Copyright 2026 The SegAlign Authors.
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

#pragma once

#include <stdexcept>
#include <string>

namespace segalign {

/// Base class for every error this library throws.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// File could not be opened, read, written, or parsed.
class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(what) {}
};

/// Operand dimensions or dtypes do not match the operation's contract.
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& what) : Error(what) {}
};

/// A value violates an invariant (range, normalization, ordering).
class ValueError : public Error {
public:
    explicit ValueError(const std::string& what) : Error(what) {}
};

}  // namespace segalign
