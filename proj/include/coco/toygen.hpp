#pragma once

#include <cstdint>
#include <string>

#include "coco/graph.hpp"

namespace coco {

// Synthetic adaptation benchmark: 200 source graphs (class 0: cycles of
// length 5-8, class 1: stars with 5-8 leaves, exactly 100 each) with 2-D
// Gaussian node attributes at class-dependent means, and 200 target graphs
// from the same structure generators whose attribute means are shifted by a
// fixed offset and whose degree distribution is perturbed by one extra random
// edge per graph.  Fully determined by the seed.
DomainPair gen_toy(std::uint64_t seed);

// Writes the pair in TUDataset format under out_dir as toy_source_* and
// toy_target_*.  Target labels are written; loaders hide them from training.
void write_toy(const std::string& out_dir, std::uint64_t seed);

}  // namespace coco
