// Copyright 2026 The fairdiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "fairdiff/kernels.hpp"

namespace fairdiff::kernels::detail {

const KernelTable& scalar_table() noexcept;

#if defined(FAIRDIFF_HAVE_AVX2)
const KernelTable& avx2_table() noexcept;
#endif

#if defined(FAIRDIFF_HAVE_NEON)
const KernelTable& neon_table() noexcept;
#endif

}  // namespace fairdiff::kernels::detail
