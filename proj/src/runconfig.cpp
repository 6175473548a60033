#include "mapfuse/runconfig.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace mapfuse {
namespace {

using nlohmann::json;

ScanSet parse_scan_set(const std::string& s) {
  if (s == "single") return ScanSet::kSingle;
  if (s == "horizontal") return ScanSet::kHorizontal;
  if (s == "vertical") return ScanSet::kVertical;
  if (s == "multi") return ScanSet::kMulti;
  throw std::invalid_argument("config: unknown bev_scan '" + s + "'");
}

InstanceScanSet parse_instance_scan(const std::string& s) {
  if (s == "spatial") return InstanceScanSet::kSpatial;
  if (s == "temporal") return InstanceScanSet::kTemporal;
  if (s == "spatial-temporal") return InstanceScanSet::kBoth;
  throw std::invalid_argument("config: unknown instance_scan '" + s + "'");
}

MatchCostKind parse_match_cost(const std::string& s) {
  if (s == "l2") return MatchCostKind::kL2;
  if (s == "cosine") return MatchCostKind::kCosine;
  if (s == "chamfer") return MatchCostKind::kChamfer;
  throw std::invalid_argument("config: unknown match_cost '" + s + "'");
}

SsmMode parse_ssm_mode(const std::string& s) {
  if (s == "recurrence") return SsmMode::kRecurrence;
  if (s == "scan") return SsmMode::kScan;
  if (s == "kernel") return SsmMode::kKernel;
  throw std::invalid_argument("config: unknown ssm_mode '" + s + "'");
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");

  RunConfig rc;
  std::set<std::string> seen;
  auto take = [&](const char* key) -> const json* {
    auto it = j.find(key);
    if (it == j.end()) return nullptr;
    seen.insert(key);
    return &*it;
  };
  auto geti = [&](const char* key, int64_t& dst) {
    if (const json* v = take(key)) dst = v->get<int64_t>();
  };
  auto getu = [&](const char* key, uint64_t& dst) {
    if (const json* v = take(key)) dst = v->get<uint64_t>();
  };
  auto getd = [&](const char* key, double& dst) {
    if (const json* v = take(key)) dst = v->get<double>();
  };
  auto getb = [&](const char* key, bool& dst) {
    if (const json* v = take(key)) dst = v->get<bool>();
  };

  geti("bev_channels", rc.model.c);
  geti("grid_h", rc.model.h);
  geti("grid_w", rc.model.w);
  getd("range_x_max", rc.model.x_max);
  getd("range_y_max", rc.model.y_max);
  geti("obs_channels", rc.model.c_obs);
  geti("memory_size", rc.model.n_memory);
  geti("num_queries", rc.model.n_q);
  geti("query_dim", rc.model.d);
  geti("points_per_line", rc.model.p);
  geti("num_classes", rc.model.classes);
  geti("dss_state_size", rc.model.dss_state);
  getd("gss_alpha", rc.model.alpha);
  getd("gss_beta", rc.model.beta);
  geti("decoder_layers", rc.model.decoder_layers);
  geti("attn_dim", rc.model.attn_dim);
  geti("head_hidden", rc.model.head_hidden);
  getu("seed", rc.model.seed);
  getb("use_bmf", rc.model.use_bmf);
  getb("use_imf", rc.model.use_imf);
  getb("share_dir_weights", rc.model.share_dir_weights);
  if (const json* v = take("bev_scan")) rc.model.scan_set = parse_scan_set(v->get<std::string>());
  if (const json* v = take("instance_scan"))
    rc.model.instance_scan = parse_instance_scan(v->get<std::string>());
  if (const json* v = take("match_cost"))
    rc.model.match_cost = parse_match_cost(v->get<std::string>());
  if (const json* v = take("ssm_mode")) rc.model.ssm_mode = parse_ssm_mode(v->get<std::string>());

  geti("frames_per_scenario", rc.gen.t_frames);
  geti("min_boundaries", rc.gen.min_boundaries);
  geti("max_boundaries", rc.gen.max_boundaries);
  geti("min_dividers", rc.gen.min_dividers);
  geti("max_dividers", rc.gen.max_dividers);
  geti("min_crossings", rc.gen.min_crossings);
  geti("max_crossings", rc.gen.max_crossings);
  getd("noise_sigma", rc.gen.noise_sigma);
  getd("occlusion_fraction", rc.gen.occlusion_fraction);
  geti("num_occluders", rc.gen.n_occluders);
  getd("occluder_persistence", rc.gen.occluder_persistence);
  getd("ego_step_m", rc.gen.step_m);
  getd("min_gt_length", rc.gen.min_gt_length);

  getd("lambda_pts", rc.loss.lambda_pts);
  getd("lambda_cls", rc.loss.lambda_cls);
  getd("focal_alpha", rc.loss.focal_alpha);
  getd("focal_gamma", rc.loss.focal_gamma);
  getd("smooth_l1_delta", rc.loss.smooth_l1_delta);

  if (const json* v = take("eval_thresholds")) {
    rc.eval.thresholds.clear();
    for (const auto& x : *v) rc.eval.thresholds.push_back(x.get<double>());
  }
  getd("score_threshold", rc.eval.score_threshold);

  getd("lr", rc.train.lr);
  getd("weight_decay", rc.train.weight_decay);
  geti("epochs", rc.train.epochs);
  geti("batch_scenarios", rc.train.batch_scenarios);
  getd("grad_clip", rc.train.grad_clip);
  geti("log_eval_scenarios", rc.train.log_eval_scenarios);
  getb("deterministic", rc.deterministic);

  for (auto it = j.begin(); it != j.end(); ++it)
    if (!seen.count(it.key()))
      throw std::invalid_argument("config: unknown key '" + it.key() + "'");

  rc.model.validate();
  rc.sync();
  rc.gen.validate();
  rc.eval.validate();
  rc.train.deterministic = rc.deterministic;
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config: cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str());
}

std::string run_config_to_json(const RunConfig& rc) {
  json j;
  j["bev_channels"] = rc.model.c;
  j["grid_h"] = rc.model.h;
  j["grid_w"] = rc.model.w;
  j["range_x_max"] = rc.model.x_max;
  j["range_y_max"] = rc.model.y_max;
  j["obs_channels"] = rc.model.c_obs;
  j["memory_size"] = rc.model.n_memory;
  j["num_queries"] = rc.model.n_q;
  j["query_dim"] = rc.model.d;
  j["points_per_line"] = rc.model.p;
  j["num_classes"] = rc.model.classes;
  j["dss_state_size"] = rc.model.dss_state;
  j["gss_alpha"] = rc.model.alpha;
  j["gss_beta"] = rc.model.beta;
  j["decoder_layers"] = rc.model.decoder_layers;
  j["attn_dim"] = rc.model.attn_dim;
  j["head_hidden"] = rc.model.head_hidden;
  j["seed"] = rc.model.seed;
  j["use_bmf"] = rc.model.use_bmf;
  j["use_imf"] = rc.model.use_imf;
  j["share_dir_weights"] = rc.model.share_dir_weights;
  j["bev_scan"] = to_string(rc.model.scan_set);
  j["instance_scan"] = to_string(rc.model.instance_scan);
  j["match_cost"] = to_string(rc.model.match_cost);
  j["ssm_mode"] = to_string(rc.model.ssm_mode);
  j["frames_per_scenario"] = rc.gen.t_frames;
  j["min_boundaries"] = rc.gen.min_boundaries;
  j["max_boundaries"] = rc.gen.max_boundaries;
  j["min_dividers"] = rc.gen.min_dividers;
  j["max_dividers"] = rc.gen.max_dividers;
  j["min_crossings"] = rc.gen.min_crossings;
  j["max_crossings"] = rc.gen.max_crossings;
  j["noise_sigma"] = rc.gen.noise_sigma;
  j["occlusion_fraction"] = rc.gen.occlusion_fraction;
  j["num_occluders"] = rc.gen.n_occluders;
  j["occluder_persistence"] = rc.gen.occluder_persistence;
  j["ego_step_m"] = rc.gen.step_m;
  j["min_gt_length"] = rc.gen.min_gt_length;
  j["lambda_pts"] = rc.loss.lambda_pts;
  j["lambda_cls"] = rc.loss.lambda_cls;
  j["focal_alpha"] = rc.loss.focal_alpha;
  j["focal_gamma"] = rc.loss.focal_gamma;
  j["smooth_l1_delta"] = rc.loss.smooth_l1_delta;
  j["eval_thresholds"] = rc.eval.thresholds;
  j["score_threshold"] = rc.eval.score_threshold;
  j["lr"] = rc.train.lr;
  j["weight_decay"] = rc.train.weight_decay;
  j["epochs"] = rc.train.epochs;
  j["batch_scenarios"] = rc.train.batch_scenarios;
  j["grad_clip"] = rc.train.grad_clip;
  j["log_eval_scenarios"] = rc.train.log_eval_scenarios;
  j["deterministic"] = rc.deterministic;
  return j.dump(2);
}

}  // namespace mapfuse
