#include "imap/parallel.hpp"

#include <omp.h>

#include <cstdlib>
#include <string>

namespace imap {

namespace {

int default_threads() {
  if (const char* env = std::getenv("IMAP_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return n;
    } catch (...) {
    }
  }
  return omp_get_num_procs();
}

}  // namespace

void set_thread_count(int n) { omp_set_num_threads(n > 0 ? n : default_threads()); }

int thread_count() { return omp_get_max_threads(); }

}  // namespace imap
