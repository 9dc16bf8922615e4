#include <benchmark/benchmark.h>

// libbenchmark_main.a on this toolchain carries incompatible LTO bytecode.
BENCHMARK_MAIN();
