#pragma once

#include <string>

#include "mapfuse/evaluation.hpp"
#include "mapfuse/loss.hpp"
#include "mapfuse/model.hpp"
#include "mapfuse/synthworld.hpp"
#include "mapfuse/trainer.hpp"

namespace mapfuse {

// Flat JSON run configuration. Every key is optional and overrides the desk
// default; unknown keys are hard errors.
struct RunConfig {
  ModelConfig model;
  GenConfig gen;
  LossWeights loss;
  EvalConfig eval;
  TrainConfig train;
  bool deterministic = true;

  // keep dataset-facing extents consistent with the model
  void sync() {
    gen.h = model.h;
    gen.w = model.w;
    gen.c_obs = model.c_obs;
    gen.p = model.p;
    gen.x_max = model.x_max;
    gen.y_max = model.y_max;
    train.seed = model.seed;
  }
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
std::string run_config_to_json(const RunConfig& rc);

}  // namespace mapfuse
