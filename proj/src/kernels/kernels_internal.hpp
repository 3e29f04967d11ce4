#pragma once

#include "pbq/kernels.hpp"

namespace pbq::kernels {

// Defined in avx2.cpp, which is compiled with -mavx2 -mfma. Must only be
// called after a runtime CPU check.
const KernelSet &avx2_kernels_unchecked();

} // namespace pbq::kernels
