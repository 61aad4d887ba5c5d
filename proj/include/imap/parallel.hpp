#pragma once

namespace imap {

// Caps OpenMP parallelism for all kernels. n <= 0 restores the default
// (IMAP_THREADS if set, else the number of available cores).
void set_thread_count(int n);
int thread_count();

}  // namespace imap
