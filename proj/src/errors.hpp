// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace vcal {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid configuration (bad key, bad value, inconsistent dimensions in a config).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Dimension / shape mismatch between arguments.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Invalid numeric argument (non-positive scale, empty vector, bad index, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

// Input lies outside a problem's domain.
class DomainError : public Error {
public:
    using Error::Error;
};

// File or parse failure.
class IoError : public Error {
public:
    using Error::Error;
};

// A non-finite value surfaced during evaluation; what() names the parameter block.
class NonFiniteError : public Error {
public:
    using Error::Error;
};

} // namespace vcal
