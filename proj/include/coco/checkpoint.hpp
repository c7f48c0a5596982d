#pragma once

#include <string>

#include "coco/trainer.hpp"

namespace coco {

// Models round-trip through a versioned JSON document ("coco-checkpoint-v1"):
// the training config, derived metadata, every parameter tensor as a flat
// float64 list, and per-layer filter structures plus quantizer centroids for
// kernel-network branches.  Doubles are written in shortest round-trip form,
// so save -> load -> save reproduces the file byte for byte.  Optimizer state
// is not part of the checkpoint; resumed training starts with fresh moments.
std::string model_to_json(const Model& model);
Model model_from_json(const std::string& text);

void save_model(const Model& model, const std::string& path);  // IoError on open failure
Model load_model(const std::string& path);  // IoError missing file, ParseError bad JSON,
                                            // ConfigError wrong format or missing fields

std::string negative_pool_name(NegativePool pool);
NegativePool parse_negative_pool(const std::string& name);  // ConfigError on unknown name

}  // namespace coco
