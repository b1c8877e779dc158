#pragma once

#include "dba/kernels.hpp"

namespace dba::kernels::detail {

extern const KernelTable kScalarTable;
#if defined(DBA_HAVE_AVX2)
extern const KernelTable kAvx2Table;
#endif
#if defined(DBA_HAVE_NEON)
extern const KernelTable kNeonTable;
#endif

}  // namespace dba::kernels::detail
