#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "mapfuse/bev_fusion.hpp"
#include "mapfuse/geometry.hpp"
#include "mapfuse/instance_fusion.hpp"
#include "mapfuse/memory_bank.hpp"
#include "mapfuse/ops.hpp"
#include "mapfuse/rng.hpp"
#include "mapfuse/scan.hpp"
#include "mapfuse/ssm.hpp"
#include "mapfuse/tape.hpp"

namespace mapfuse {

struct ModelConfig {
  int64_t c = 8;      // BEV feature channels
  int64_t h = 50;     // BEV grid rows
  int64_t w = 100;    // BEV grid cols
  double x_max = 30.0;
  double y_max = 15.0;
  int64_t c_obs = 3;  // observation raster channels
  int64_t n_memory = 4;
  int64_t n_q = 20;
  int64_t d = 64;     // query width
  int64_t p = 8;      // points per polyline
  int64_t classes = 3;
  int64_t dss_state = 16;
  double alpha = 0.5;
  double beta = 4.0;
  int64_t decoder_layers = 2;
  int64_t attn_dim = 32;
  int64_t head_hidden = 64;
  uint64_t seed = 1;

  bool use_bmf = true;  // feed BEV history into fusion
  bool use_imf = true;  // feed instance history into fusion
  ScanSet scan_set = ScanSet::kMulti;
  InstanceScanSet instance_scan = InstanceScanSet::kBoth;
  MatchCostKind match_cost = MatchCostKind::kL2;
  bool share_dir_weights = false;
  SsmMode ssm_mode = SsmMode::kRecurrence;

  int64_t bev_history_slots() const { return use_bmf ? n_memory : 0; }
  int64_t ins_history_slots() const { return use_imf ? n_memory : 0; }

  void validate() const {
    if (c < 1 || h < 1 || w < 1 || c_obs < 1 || n_memory < 0 || n_q < 1 || d < 1 || p < 2 ||
        classes < 1 || dss_state < 1 || decoder_layers < 1 || attn_dim < 1 || head_hidden < 1)
      throw std::invalid_argument("model config: all extents must be positive");
    const double ac = alpha * static_cast<double>(c), bc = beta * static_cast<double>(c);
    if (std::abs(ac - std::llround(ac)) > 1e-9 || std::abs(bc - std::llround(bc)) > 1e-9 ||
        ac < 1 || bc < 1)
      throw std::invalid_argument("model config: alpha*C and beta*C must be positive integers");
  }
};

template <class T>
class ParamRegistry {
 public:
  void add(const std::string& name, Tensor<T>* t) {
    index_[t] = static_cast<int64_t>(items_.size());
    by_name_[name] = static_cast<int64_t>(items_.size());
    items_.emplace_back(name, t);
  }
  int64_t count() const { return static_cast<int64_t>(items_.size()); }
  const std::string& name(int64_t i) const { return items_[static_cast<size_t>(i)].first; }
  Tensor<T>& tensor(int64_t i) const { return *items_[static_cast<size_t>(i)].second; }
  int64_t index_of(const Tensor<T>* t) const { return index_.at(t); }
  int64_t find(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? -1 : it->second;
  }
  int64_t total_scalars() const {
    int64_t n = 0;
    for (auto& [_, t] : items_) n += t->size();
    return n;
  }

 private:
  std::vector<std::pair<std::string, Tensor<T>*>> items_;
  std::unordered_map<const Tensor<T>*, int64_t> index_;
  std::unordered_map<std::string, int64_t> by_name_;
};

// Per-tape registration of every parameter as a leaf.
template <class T>
struct Binding {
  const ParamRegistry<T>* registry = nullptr;
  std::vector<Var<T>> vars;

  Var<T> operator()(const Tensor<T>& param) const {
    return vars[static_cast<size_t>(registry->index_of(&param))];
  }
};

template <class T>
struct FrameOutput {
  Tensor<T> cls_logits;  // [N_q, K+1], last class is background
  Tensor<T> points;      // [N_q, P, 2] in ego metric coordinates
};

template <class T>
struct StepResult {
  FrameOutput<T> orig, fused;
  Var<T> orig_logits, orig_points;    // points as [N_q, 2P]
  Var<T> fused_logits, fused_points;
  Var<T> current_bev;      // F_t
  Var<T> refined_bev;      // F'_t (producer of the stored BEV entry)
  Var<T> decoded_queries;  // Q_t
  Var<T> refined_queries;  // Q'_t (producer of the stored query entry)
};

namespace detail {

template <class T>
Tensor<T> randn_tensor(Shape s, double stddev, Rng& rng) {
  Tensor<T> t(std::move(s));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = T(rng.normal() * stddev);
  return t;
}

}  // namespace detail

template <class T>
struct DecoderLayerParams {
  Tensor<T> w_q, w_k, w_v, w_c;          // projections
  Tensor<T> ln1_g, ln1_b, ln2_g, ln2_b;  // layer norms
  Tensor<T> ff_w1, ff_b1, ff_w2, ff_b2;  // feedforward
};

// Observation encoder + query decoder stand-in + heads, wired with BEV and
// instance fusion into one per-frame step.
template <class T>
class MapModel {
 public:
  ModelConfig cfg;
  GridGeometry geom;

  // encoder
  Tensor<T> enc_w1, enc_b1, enc_w2, enc_b2;
  // BEV fusion
  Tensor<T> bmf_conv_w, bmf_conv_b, bmf_ln_g, bmf_ln_b;
  std::vector<GssParams<T>> bmf_gss;
  // decoder
  Tensor<T> query_embed;
  std::vector<DecoderLayerParams<T>> dec;
  // instance fusion
  GssParams<T> imf_spatial, imf_temporal;
  // heads
  Tensor<T> cls_w1, cls_b1, cls_w2, cls_b2;
  Tensor<T> pts_w1, pts_b1, pts_w2, pts_b2;

  ParamRegistry<T> params;
  Tensor<T> pos_enc;    // [H*W, C], fixed
  Tensor<T> pts_scale;  // [N_q, 2P] sigmoid -> metric affine
  Tensor<T> pts_shift;  // [N_q, 2P]

  MapModel(const MapModel&) = delete;
  MapModel& operator=(const MapModel&) = delete;

  explicit MapModel(const ModelConfig& config) : cfg(config) {
    cfg.validate();
    geom = GridGeometry{cfg.h, cfg.w, cfg.x_max, cfg.y_max};
    Rng root(cfg.seed);

    Rng enc_rng = root.fork(1);
    const double estd1 = std::sqrt(2.0 / double(cfg.c_obs * 9));
    const double estd2 = std::sqrt(2.0 / double(cfg.c * 9));
    enc_w1 = detail::randn_tensor<T>({cfg.c, cfg.c_obs, 3, 3}, estd1, enc_rng);
    enc_b1 = Tensor<T>::zeros({cfg.c});
    enc_w2 = detail::randn_tensor<T>({cfg.c, cfg.c, 3, 3}, estd2, enc_rng);
    enc_b2 = Tensor<T>::zeros({cfg.c});

    Rng bmf_rng = root.fork(2);
    const int64_t cat_c = (cfg.bev_history_slots() + 1) * cfg.c;
    bmf_conv_w = detail::randn_tensor<T>({cfg.c, cat_c, 3, 3},
                                         std::sqrt(2.0 / double(cat_c * 9)), bmf_rng);
    bmf_conv_b = Tensor<T>::zeros({cfg.c});
    bmf_ln_g = Tensor<T>::full({cfg.c}, T(1));
    bmf_ln_b = Tensor<T>::zeros({cfg.c});
    const size_t n_dir_params = cfg.share_dir_weights ? 1 : scan_directions(cfg.scan_set).size();
    for (size_t i = 0; i < n_dir_params; ++i) {
      Rng r = bmf_rng.fork(10 + i);
      bmf_gss.push_back(GssParams<T>::init(cfg.c, cfg.alpha, cfg.beta, cfg.dss_state, r));
    }

    Rng dec_rng = root.fork(3);
    query_embed = detail::randn_tensor<T>({cfg.n_q, cfg.d}, 1.0, dec_rng);
    for (int64_t l = 0; l < cfg.decoder_layers; ++l) {
      DecoderLayerParams<T> lay;
      const int64_t a = cfg.attn_dim;
      lay.w_q = detail::randn_tensor<T>({cfg.d, a}, 1.0 / std::sqrt(double(cfg.d)), dec_rng);
      lay.w_k = detail::randn_tensor<T>({cfg.c, a}, 1.0 / std::sqrt(double(cfg.c)), dec_rng);
      lay.w_v = detail::randn_tensor<T>({cfg.c, a}, 1.0 / std::sqrt(double(cfg.c)), dec_rng);
      lay.w_c = detail::randn_tensor<T>({a, cfg.d}, 1.0 / std::sqrt(double(a)), dec_rng);
      lay.ln1_g = Tensor<T>::full({cfg.d}, T(1));
      lay.ln1_b = Tensor<T>::zeros({cfg.d});
      lay.ln2_g = Tensor<T>::full({cfg.d}, T(1));
      lay.ln2_b = Tensor<T>::zeros({cfg.d});
      const int64_t ff = 4 * cfg.d;
      lay.ff_w1 = detail::randn_tensor<T>({cfg.d, ff}, 1.0 / std::sqrt(double(cfg.d)), dec_rng);
      lay.ff_b1 = Tensor<T>::zeros({ff});
      lay.ff_w2 = detail::randn_tensor<T>({ff, cfg.d}, 1.0 / std::sqrt(double(ff)), dec_rng);
      lay.ff_b2 = Tensor<T>::zeros({cfg.d});
      dec.push_back(std::move(lay));
    }

    Rng imf_rng = root.fork(4);
    Rng imf_s = imf_rng.fork(0), imf_t = imf_rng.fork(1);
    imf_spatial = GssParams<T>::init(cfg.d, cfg.alpha, cfg.beta, cfg.dss_state, imf_s);
    imf_temporal = GssParams<T>::init(cfg.d, cfg.alpha, cfg.beta, cfg.dss_state, imf_t);

    Rng head_rng = root.fork(5);
    const int64_t hh = cfg.head_hidden, k1 = cfg.classes + 1, pp = 2 * cfg.p;
    cls_w1 = detail::randn_tensor<T>({cfg.d, hh}, 1.0 / std::sqrt(double(cfg.d)), head_rng);
    cls_b1 = Tensor<T>::zeros({hh});
    cls_w2 = detail::randn_tensor<T>({hh, k1}, 1.0 / std::sqrt(double(hh)), head_rng);
    cls_b2 = Tensor<T>::zeros({k1});
    pts_w1 = detail::randn_tensor<T>({cfg.d, hh}, 1.0 / std::sqrt(double(cfg.d)), head_rng);
    pts_b1 = Tensor<T>::zeros({hh});
    pts_w2 = detail::randn_tensor<T>({hh, pp}, 1.0 / std::sqrt(double(hh)), head_rng);
    pts_b2 = Tensor<T>::zeros({pp});

    build_constants();
    register_params();
  }

  Binding<T> bind(Tape<T>& tape, bool trainable) const {
    Binding<T> b;
    b.registry = &params;
    b.vars.reserve(static_cast<size_t>(params.count()));
    for (int64_t i = 0; i < params.count(); ++i)
      b.vars.push_back(tape.leaf(params.tensor(i), trainable));
    return b;
  }

  // 2-layer conv encoder from the observation raster to BEV channels.
  Var<T> encode_observation(Var<T> obs, const Binding<T>& b) const {
    const Shape want{cfg.c_obs, cfg.h, cfg.w};
    if (obs.shape() != want)
      throw std::invalid_argument("encode_observation: raster geometry mismatch");
    Var<T> h1 = gelu(conv2d(obs, b(enc_w1), b(enc_b1)));
    return conv2d(h1, b(enc_w2), b(enc_b2));
  }

  // Cross-attention decoder stand-in over flattened BEV cells.
  Var<T> decode_queries(Var<T> bev, const Binding<T>& b) const {
    Tape<T>& t = *bev.tape;
    Var<T> seq = scan_bev(bev, ScanDirection::kRight);
    Var<T> seq_pe = add(seq, t.constant(pos_enc_for(bev.shape()[1], bev.shape()[2])));
    Var<T> q = b(query_embed);
    const T inv_sqrt = T(1) / std::sqrt(T(cfg.attn_dim));
    for (const auto& lay : dec) {
      Var<T> keys = matmul(seq_pe, b(lay.w_k));
      Var<T> vals = matmul(seq_pe, b(lay.w_v));
      Var<T> qp = matmul(q, b(lay.w_q));
      Var<T> attn = softmax_rows(scale(matmul_nt(qp, keys), inv_sqrt));
      Var<T> ctx = matmul(attn, vals);
      Var<T> s1 = layernorm(add(q, matmul(ctx, b(lay.w_c))), b(lay.ln1_g), b(lay.ln1_b));
      Var<T> ff = linear(gelu(linear(s1, b(lay.ff_w1), b(lay.ff_b1))), b(lay.ff_w2), b(lay.ff_b2));
      q = layernorm(add(s1, ff), b(lay.ln2_g), b(lay.ln2_b));
    }
    return q;
  }

  struct Heads {
    Var<T> logits;  // [N_q, K+1]
    Var<T> points;  // [N_q, 2P] metric
  };

  Heads run_heads(Var<T> queries, const Binding<T>& b) const {
    Tape<T>& t = *queries.tape;
    Heads h;
    h.logits = linear(gelu(linear(queries, b(cls_w1), b(cls_b1))), b(cls_w2), b(cls_b2));
    Var<T> raw = linear(gelu(linear(queries, b(pts_w1), b(pts_b1))), b(pts_w2), b(pts_b2));
    h.points = add(mul(sigmoid(raw), t.constant(pts_scale)), t.constant(pts_shift));
    return h;
  }

  // One full frame: encode, warp + fuse history, decode, align + fuse
  // queries, run both heads, push refined outputs into the bank.
  StepResult<T> step(Tape<T>& t, const Binding<T>& b, MemoryBank<T>& bank, const Tensor<T>& obs,
                     const Pose& pose) const {
    StepResult<T> out;
    Var<T> obs_v = t.constant(obs);
    Var<T> f_t = encode_observation(obs_v, b);
    out.current_bev = f_t;

    // BEV branch
    auto slots = bank.window_bev(cfg.bev_history_slots(), f_t.value(), pose);
    std::vector<Var<T>> warped;
    warped.reserve(slots.size());
    for (const auto& slot : slots) {
      const Rigid2 map = relative_transform(slot.pose, pose);
      Var<T> src = slot.padded ? f_t : t.constant(*slot.bev);
      warped.push_back(warp(src, geom, map));
    }
    Var<T> f_ref = fuse_bev(warped, f_t, bmf_vars(b), scan_directions(cfg.scan_set),
                            cfg.ssm_mode);
    out.refined_bev = f_ref;

    // decode + original heads
    Var<T> q_t = decode_queries(f_ref, b);
    out.decoded_queries = q_t;
    Heads orig = run_heads(q_t, b);
    out.orig_logits = orig.logits;
    out.orig_points = orig.points;
    out.orig = make_output(orig);

    // instance branch
    InstanceQuerySet<T> current{q_t.value(), orig.logits.value(),
                                reshape_points(orig.points.value())};
    auto ins_slots = bank.window_ins(cfg.ins_history_slots(), current);
    std::vector<const InstanceQuerySet<T>*> to_align;
    for (const auto& s : ins_slots)
      if (!s.padded) to_align.push_back(s.queries);
    AlignedHistory<T> aligned = align_history(to_align, current, cfg.match_cost);
    std::vector<Var<T>> window;
    window.reserve(ins_slots.size() + 1);
    size_t ai = 0;
    for (const auto& s : ins_slots) {
      if (s.padded)
        window.push_back(q_t);
      else
        window.push_back(t.constant(aligned.queries[ai++]));
    }
    window.push_back(q_t);
    InstanceFusionVars<T> imf{bind_gss(b, imf_spatial), bind_gss(b, imf_temporal)};
    Var<T> q_ref = fuse_instances(window, imf, cfg.instance_scan, cfg.ssm_mode);
    out.refined_queries = q_ref;

    Heads fused = run_heads(q_ref, b);
    out.fused_logits = fused.logits;
    out.fused_points = fused.points;
    out.fused = make_output(fused);

    bank.push(f_ref.value(),
              InstanceQuerySet<T>{q_ref.value(), fused.logits.value(),
                                  reshape_points(fused.points.value())},
              pose);
    return out;
  }

  BevFusionVars<T> bmf_vars(const Binding<T>& b) const {
    BevFusionVars<T> v;
    v.conv_w = b(bmf_conv_w);
    v.conv_b = b(bmf_conv_b);
    v.ln_gain = b(bmf_ln_g);
    v.ln_bias = b(bmf_ln_b);
    for (const auto& g : bmf_gss) v.dir_gss.push_back(bind_gss(b, g));
    return v;
  }

  GssVars<T> bind_gss(const Binding<T>& b, const GssParams<T>& g) const {
    GssVars<T> v;
    v.w_v = b(g.w_v);
    v.w_u = b(g.w_u);
    v.w_y = b(g.w_y);
    v.w_o = b(g.w_o);
    v.dss = DssVars<T>{b(g.dss.r),    b(g.dss.lam_im), b(g.dss.log_dt),
                       b(g.dss.w_re), b(g.dss.w_im),   b(g.dss.d_skip)};
    return v;
  }

 private:
  Tensor<T> reshape_points(Tensor<T> pts) const {
    pts.shape = {cfg.n_q, cfg.p, 2};
    return pts;
  }

  FrameOutput<T> make_output(const Heads& h) const {
    return FrameOutput<T>{h.logits.value(), reshape_points(h.points.value())};
  }

  const Tensor<T>& pos_enc_for(int64_t h, int64_t w) const {
    if (h != cfg.h || w != cfg.w)
      throw std::invalid_argument("decode_queries: BEV geometry mismatch");
    return pos_enc;
  }

  void build_constants() {
    // sine-cosine positional code over normalized cell centers; frequency
    // doubles every 4 channels
    pos_enc = Tensor<T>({cfg.h * cfg.w, cfg.c});
    for (int64_t i = 0; i < cfg.h; ++i)
      for (int64_t j = 0; j < cfg.w; ++j) {
        const double u = (double(j) + 0.5) / double(cfg.w);
        const double v = (double(i) + 0.5) / double(cfg.h);
        T* row = pos_enc.data() + (i * cfg.w + j) * cfg.c;
        for (int64_t cc = 0; cc < cfg.c; ++cc) {
          const double f = 2.0 * M_PI * double(int64_t(1) << (cc / 4));
          switch (cc % 4) {
            case 0: row[cc] = T(std::sin(f * u)); break;
            case 1: row[cc] = T(std::cos(f * u)); break;
            case 2: row[cc] = T(std::sin(f * v)); break;
            default: row[cc] = T(std::cos(f * v)); break;
          }
        }
      }
    pts_scale = Tensor<T>({cfg.n_q, 2 * cfg.p});
    pts_shift = Tensor<T>({cfg.n_q, 2 * cfg.p});
    for (int64_t q = 0; q < cfg.n_q; ++q)
      for (int64_t k = 0; k < 2 * cfg.p; ++k) {
        const bool is_x = (k % 2) == 0;
        pts_scale.at(q, k) = T(is_x ? 2.0 * cfg.x_max : 2.0 * cfg.y_max);
        pts_shift.at(q, k) = T(is_x ? -cfg.x_max : -cfg.y_max);
      }
  }

  void register_gss(const std::string& prefix, GssParams<T>& g) {
    params.add(prefix + ".w_v", &g.w_v);
    params.add(prefix + ".w_u", &g.w_u);
    params.add(prefix + ".w_y", &g.w_y);
    params.add(prefix + ".w_o", &g.w_o);
    params.add(prefix + ".dss.r", &g.dss.r);
    params.add(prefix + ".dss.lam_im", &g.dss.lam_im);
    params.add(prefix + ".dss.log_dt", &g.dss.log_dt);
    params.add(prefix + ".dss.w_re", &g.dss.w_re);
    params.add(prefix + ".dss.w_im", &g.dss.w_im);
    params.add(prefix + ".dss.d_skip", &g.dss.d_skip);
  }

  void register_params() {
    params.add("enc.conv1.w", &enc_w1);
    params.add("enc.conv1.b", &enc_b1);
    params.add("enc.conv2.w", &enc_w2);
    params.add("enc.conv2.b", &enc_b2);
    params.add("bmf.conv.w", &bmf_conv_w);
    params.add("bmf.conv.b", &bmf_conv_b);
    params.add("bmf.ln.g", &bmf_ln_g);
    params.add("bmf.ln.b", &bmf_ln_b);
    for (size_t i = 0; i < bmf_gss.size(); ++i)
      register_gss("bmf.gss" + std::to_string(i), bmf_gss[i]);
    params.add("dec.query_embed", &query_embed);
    for (size_t l = 0; l < dec.size(); ++l) {
      const std::string p = "dec" + std::to_string(l);
      params.add(p + ".w_q", &dec[l].w_q);
      params.add(p + ".w_k", &dec[l].w_k);
      params.add(p + ".w_v", &dec[l].w_v);
      params.add(p + ".w_c", &dec[l].w_c);
      params.add(p + ".ln1.g", &dec[l].ln1_g);
      params.add(p + ".ln1.b", &dec[l].ln1_b);
      params.add(p + ".ln2.g", &dec[l].ln2_g);
      params.add(p + ".ln2.b", &dec[l].ln2_b);
      params.add(p + ".ff.w1", &dec[l].ff_w1);
      params.add(p + ".ff.b1", &dec[l].ff_b1);
      params.add(p + ".ff.w2", &dec[l].ff_w2);
      params.add(p + ".ff.b2", &dec[l].ff_b2);
    }
    register_gss("imf.spatial", imf_spatial);
    register_gss("imf.temporal", imf_temporal);
    params.add("head.cls.w1", &cls_w1);
    params.add("head.cls.b1", &cls_b1);
    params.add("head.cls.w2", &cls_w2);
    params.add("head.cls.b2", &cls_b2);
    params.add("head.pts.w1", &pts_w1);
    params.add("head.pts.b1", &pts_b1);
    params.add("head.pts.w2", &pts_w2);
    params.add("head.pts.b2", &pts_b2);
  }
};

}  // namespace mapfuse
