// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace tcmgc {

/// Asks the C allocator to keep freed tensor buffers mapped instead of
/// returning them to the OS. The training loop frees and reallocates the
/// same multi-megabyte buffers every step; without this most of a step's
/// wall time goes to page faults. No-op outside glibc.
void retain_freed_memory();

}  // namespace tcmgc
