#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mapfuse/bev_fusion.hpp"
#include "testutil.hpp"

using namespace mapfuse;
using namespace mapfuse::test;

namespace {

struct FusionRig {
  int64_t c, n_hist;
  Tensor<double> conv_w, conv_b, ln_g, ln_b;
  std::vector<GssParams<double>> gss;

  FusionRig(int64_t c_, int64_t n_hist_, int64_t n_dirs, Rng& rng) : c(c_), n_hist(n_hist_) {
    const int64_t cat = (n_hist + 1) * c;
    conv_w = random_tensor({c, cat, 3, 3}, rng, 0.2);
    conv_b = random_tensor({c}, rng, 0.1);
    ln_g = Tensor<double>::full({c}, 1.0);
    ln_b = Tensor<double>::zeros({c});
    for (int64_t i = 0; i < n_dirs; ++i)
      gss.push_back(GssParams<double>::init(c, 0.5, 2.0, 4, rng));
  }

  BevFusionVars<double> bind(Tape<double>& t, bool trainable) {
    BevFusionVars<double> v;
    v.conv_w = t.leaf(conv_w, trainable);
    v.conv_b = t.leaf(conv_b, trainable);
    v.ln_gain = t.leaf(ln_g, trainable);
    v.ln_bias = t.leaf(ln_b, trainable);
    for (auto& g : gss)
      v.dir_gss.push_back(GssVars<double>{
          t.leaf(g.w_v, trainable), t.leaf(g.w_u, trainable), t.leaf(g.w_y, trainable),
          t.leaf(g.w_o, trainable),
          DssVars<double>{t.leaf(g.dss.r, trainable), t.leaf(g.dss.lam_im, trainable),
                          t.leaf(g.dss.log_dt, trainable), t.leaf(g.dss.w_re, trainable),
                          t.leaf(g.dss.w_im, trainable), t.leaf(g.dss.d_skip, trainable)}});
    return v;
  }
};

}  // namespace

TEST_CASE("zeroed output projections collapse fusion to the normalized conv path") {
  Rng rng(3);
  const int64_t h = 5, w = 7;
  FusionRig rig(4, 2, 4, rng);
  for (auto& g : rig.gss) g.w_o.fill(0.0);

  std::vector<Tensor<double>> hist{random_tensor({4, h, w}, rng),
                                   random_tensor({4, h, w}, rng)};
  Tensor<double> f_t = random_tensor({4, h, w}, rng);

  Tape<double> t;
  auto vars = rig.bind(t, false);
  std::vector<Var<double>> window{t.constant(hist[0]), t.constant(hist[1])};
  auto cur = t.constant(f_t);
  auto fused = fuse_bev(window, cur, vars, scan_directions(ScanSet::kMulti),
                        SsmMode::kRecurrence);

  // reference: conv + per-cell channel layernorm, no GSS
  std::vector<Var<double>> cat = window;
  cat.push_back(cur);
  auto f_f = unscan_bev(
      layernorm(scan_bev(conv2d(concat0(cat), vars.conv_w, vars.conv_b), ScanDirection::kRight),
                vars.ln_gain, vars.ln_bias),
      ScanDirection::kRight, h, w);
  CHECK(fused.value().v == f_f.value().v);
}

TEST_CASE("shape contract at production scale") {
  Rng rng(5);
  FusionRig rig(32, 4, 4, rng);
  std::vector<Tensor<double>> hist;
  for (int i = 0; i < 4; ++i) hist.push_back(random_tensor({32, 50, 100}, rng, 0.1));
  Tensor<double> f_t = random_tensor({32, 50, 100}, rng, 0.1);

  Tape<double> t;
  auto vars = rig.bind(t, false);
  std::vector<Var<double>> window;
  for (auto& ht : hist) window.push_back(t.constant(ht));
  auto fused = fuse_bev(window, t.constant(f_t), vars, scan_directions(ScanSet::kMulti),
                        SsmMode::kRecurrence);
  CHECK(fused.shape() == Shape{32, 50, 100});
}

TEST_CASE("geometry mismatch in the window is rejected") {
  Rng rng(7);
  FusionRig rig(4, 1, 4, rng);
  Tape<double> t;
  auto vars = rig.bind(t, false);
  std::vector<Var<double>> window{t.constant(Tensor<double>::zeros({4, 6, 6}))};
  CHECK_THROWS_AS(fuse_bev(window, t.constant(Tensor<double>::zeros({4, 5, 7})), vars,
                           scan_directions(ScanSet::kMulti), SsmMode::kRecurrence),
                  std::invalid_argument);
}

TEST_CASE("direction averaging is invariant to branch order") {
  Rng rng(9);
  const int64_t h = 4, w = 6;
  FusionRig rig(4, 0, 4, rng);
  Tensor<double> f_t = random_tensor({4, h, w}, rng);

  auto run = [&](const std::vector<ScanDirection>& dirs,
                 const std::vector<size_t>& gss_order) {
    Tape<double> t;
    auto vars = rig.bind(t, false);
    BevFusionVars<double> permuted = vars;
    permuted.dir_gss.clear();
    for (size_t i : gss_order) permuted.dir_gss.push_back(vars.dir_gss[i]);
    return fuse_bev(std::vector<Var<double>>{}, t.constant(f_t), permuted, dirs,
                    SsmMode::kRecurrence)
        .value();
  };
  // same branch set, swapped order (branch i keeps its own weights)
  auto a = run({ScanDirection::kRight, ScanDirection::kLeft, ScanDirection::kDown,
                ScanDirection::kUp},
               {0, 1, 2, 3});
  auto b = run({ScanDirection::kUp, ScanDirection::kDown, ScanDirection::kLeft,
                ScanDirection::kRight},
               {3, 2, 1, 0});
  CHECK(max_abs_diff(a, b) < 1e-12);
}

TEST_CASE("single-frame ablation path works with zero history slots") {
  Rng rng(11);
  FusionRig rig(4, 0, 1, rng);
  Tensor<double> f_t = random_tensor({4, 4, 5}, rng);
  Tape<double> t;
  auto vars = rig.bind(t, false);
  auto fused = fuse_bev(std::vector<Var<double>>{}, t.constant(f_t), vars,
                        scan_directions(ScanSet::kSingle), SsmMode::kRecurrence);
  CHECK(fused.shape() == Shape{4, 4, 5});
}

TEST_CASE("gradient flows to the current frame but not to stored history") {
  Rng rng(13);
  const int64_t h = 4, w = 5;
  FusionRig rig(3, 2, 2, rng);
  Tensor<double> f_t = random_tensor({3, h, w}, rng, 0.5);
  std::vector<Tensor<double>> hist{random_tensor({3, h, w}, rng),
                                   random_tensor({3, h, w}, rng)};
  Tensor<double> r = random_tensor({3, h, w}, rng);

  auto eval = [&]() {
    Tape<double> t;
    auto vars = rig.bind(t, false);
    std::vector<Var<double>> window{t.constant(hist[0]), t.constant(hist[1])};
    auto fused = fuse_bev(window, t.leaf(f_t, false), vars,
                          scan_directions(ScanSet::kHorizontal), SsmMode::kRecurrence);
    return sum(mul(fused, t.constant(r))).value()[0];
  };

  Tape<double> t;
  auto vars = rig.bind(t, true);
  // history arrives via constants, exactly as the memory bank supplies it
  auto h0 = t.leaf(hist[0]);  // pretend producer that the bank detached from
  std::vector<Var<double>> window{t.detach(h0), t.constant(hist[1])};
  auto cur = t.leaf(f_t);
  auto fused =
      fuse_bev(window, cur, vars, scan_directions(ScanSet::kHorizontal), SsmMode::kRecurrence);
  t.backward(sum(mul(fused, t.constant(r))));

  CHECK(rel_err(t.grad_of(cur), finite_diff(f_t, eval)) < 1e-4);
  CHECK(t.grad_of(h0).v == Tensor<double>::zeros({3, h, w}).v);
}
