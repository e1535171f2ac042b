#pragma once

// Rule-based toy data: a perturbation corpus whose sentences are all
// recoverable from any single masked word, and Winograd-style benchmarks
// built from trigger-word pairs.

#include <cstdint>
#include <string>
#include <vector>

#include "cref/text/corpus.hpp"

namespace cref {

struct SynthCorpusConfig {
  std::size_t groups = 60;
  std::uint64_t seed = 0;
  std::size_t max_attempts = 200000;
};

// Throws if the requested number of groups cannot be drawn.
std::vector<PerturbedGroup> synthesize_corpus(const SynthCorpusConfig& config);

enum class SynthBenchmark {
  // Physical-property frames ("did not fit into ... too big/small").
  Physical,
  // Social frames ("paid ... rich/poor").
  Social,
};

struct SynthBenchmarkConfig {
  SynthBenchmark kind = SynthBenchmark::Physical;
  // Lines; each carries a twin, so the dataset yields twice as many items.
  std::size_t lines = 500;
  std::uint64_t seed = 0;
};

// Half of the lines have label 1 and half label 2; every line has a twin
// with the trigger word flipped.
std::vector<SchemaInstance> synthesize_benchmark(const SynthBenchmarkConfig& config);

std::string synth_benchmark_name(SynthBenchmark kind);

}  // namespace cref
