// Copyright 2026 The cglasim Authors
// SPDX-License-Identifier: Apache-2.0
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

// Quantizes a short row and activation vector, then runs the Q8_0 kernel
// flow next to the reference dot product.

#include <cmath>
#include <cstdio>
#include <vector>

#include "cglasim/kernels.hpp"
#include "cglasim/quant.hpp"

int main() {
  using namespace cglasim;
  std::vector<float> w(128), x(128);
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::sin(0.1f * static_cast<float>(i));
    x[i] = std::cos(0.05f * static_cast<float>(i));
  }
  const QuantTensor qw = quantize(QuantFormat::Q8_0, w);
  const QuantTensor qx = quantize(QuantFormat::Q8_0, x);

  const DotResult ex = exec_dot(QuantFormat::Q8_0, qw, qx);
  const RefDot ref = ref_dot(QuantFormat::Q8_0, qw, qx);
  double exact = 0;
  for (std::size_t i = 0; i < w.size(); ++i) exact += static_cast<double>(w[i]) * x[i];

  std::printf("kernel     %.9g\n", ex.value);
  std::printf("reference  %.9g\n", ref.value);
  std::printf("float dot  %.9g\n", exact);
  std::printf("cycles %.0f on %d PEs\n", ex.cycles, ex.pe_used);
  return ex.value == ref.value ? 0 : 1;
}
