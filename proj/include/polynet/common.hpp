// Copyright (c) 2026 The polynet authors.
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

#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace polynet {

/// Scalar type used everywhere. Verification paths require double; the
/// training path simply shares it.
using Real = double;

/// Tensor extents, outermost first.
using Shape = std::vector<int>;

// ---------------------------------------------------------------------------
// Error taxonomy. Every failure mode in the library maps onto one of these.
// ---------------------------------------------------------------------------

/// Shape or extent mismatch between operands.
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument or inconsistent specification.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed byte stream while reading an external file format.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// NaN/Inf produced by a numeric computation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// API misuse (e.g. backward on a non-scalar).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (int e : shape) n *= e;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

}  // namespace polynet
