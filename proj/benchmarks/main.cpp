#include <benchmark/benchmark.h>

// The distro's benchmark_main archive carries LTO bytecode from another GCC
// release, so the entry point is defined here.
BENCHMARK_MAIN();
