#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mapfuse/scan.hpp"
#include "testutil.hpp"

using namespace mapfuse;
using namespace mapfuse::test;

TEST_CASE("2x2 grid definitional orders") {
  // grid [[a,b],[c,d]] as one channel
  Tensor<double> f({1, 2, 2}, {1, 2, 3, 4});  // a=1 b=2 c=3 d=4
  auto flat = [&](ScanDirection d) {
    Tensor<double> s = scan_bev_values(f, d);
    return s.v;
  };
  CHECK(flat(ScanDirection::kRight) == std::vector<double>{1, 2, 3, 4});
  CHECK(flat(ScanDirection::kLeft) == std::vector<double>{4, 3, 2, 1});
  CHECK(flat(ScanDirection::kDown) == std::vector<double>{1, 3, 2, 4});
  CHECK(flat(ScanDirection::kUp) == std::vector<double>{4, 2, 3, 1});
}

TEST_CASE("left is the reversal of right, up of down") {
  Rng rng(5);
  Tensor<double> f = random_tensor({3, 4, 5}, rng);
  auto right = scan_bev_values(f, ScanDirection::kRight);
  auto left = scan_bev_values(f, ScanDirection::kLeft);
  auto down = scan_bev_values(f, ScanDirection::kDown);
  auto up = scan_bev_values(f, ScanDirection::kUp);
  const int64_t hw = 20, c = 3;
  for (int64_t l = 0; l < hw; ++l)
    for (int64_t cc = 0; cc < c; ++cc) {
      CHECK(left.at(l, cc) == right.at(hw - 1 - l, cc));
      CHECK(up.at(l, cc) == down.at(hw - 1 - l, cc));
    }
}

TEST_CASE("round trip is bit-exact on a production-size grid") {
  Rng rng(7);
  Tensor<double> f = random_tensor({8, 50, 100}, rng);
  for (ScanDirection d : kAllDirections) {
    Tensor<double> back = unscan_bev_values(scan_bev_values(f, d), d, 50, 100);
    CHECK(back.v == f.v);
  }
}

TEST_CASE("1x1 grid degenerates to the same single-element sequence") {
  Tensor<double> f({3, 1, 1}, {1.5, -2.0, 7.0});
  for (ScanDirection d : kAllDirections) {
    Tensor<double> s = scan_bev_values(f, d);
    CHECK(s.shape == Shape{1, 3});
    CHECK(s.v == std::vector<double>{1.5, -2.0, 7.0});
  }
}

TEST_CASE("averaging unmodified scans over all directions reproduces the input") {
  Rng rng(11);
  Tensor<double> f = random_tensor({2, 6, 9}, rng);
  Tensor<double> acc({2, 6, 9});
  for (ScanDirection d : kAllDirections) {
    Tensor<double> rec = unscan_bev_values(scan_bev_values(f, d), d, 6, 9);
    for (int64_t i = 0; i < acc.size(); ++i) acc[i] += 0.25 * rec[i];
  }
  CHECK(max_abs_diff(acc, f) < 1e-15);
}

TEST_CASE("randomized bijection property over 1000 shapes") {
  Rng rng(13);
  for (int trial = 0; trial < 1000; ++trial) {
    const int64_t h = rng.uniform_int(1, 12);
    const int64_t w = rng.uniform_int(1, 12);
    const int64_t c = rng.uniform_int(1, 4);
    Tensor<double> f = random_tensor({c, h, w}, rng);
    const auto dir = kAllDirections[rng.uniform_int(0, 3)];
    Tensor<double> back = unscan_bev_values(scan_bev_values(f, dir), dir, h, w);
    REQUIRE(back.v == f.v);
  }
}

TEST_CASE("unscan rejects wrong sequence length") {
  Tensor<double> s({5, 2});
  CHECK_THROWS_AS(unscan_bev_values(s, ScanDirection::kRight, 2, 3), std::invalid_argument);
}

TEST_CASE("tape scan ops invert exactly and route gradients") {
  Rng rng(17);
  Tensor<double> f = random_tensor({2, 3, 4}, rng);
  for (ScanDirection d : kAllDirections) {
    Tape<double> t;
    auto vf = t.leaf(f);
    auto back = unscan_bev(scan_bev(vf, d), d, 3, 4);
    CHECK(back.value().v == f.v);
    t.backward(sum(mul(back, back)));
    // d/dx sum(x^2) = 2x through a bijection
    for (int64_t i = 0; i < f.size(); ++i)
      CHECK(t.grad_of(vf)[i] == doctest::Approx(2.0 * f[i]).epsilon(1e-12));
  }
}

TEST_CASE("instance layouts: definitional interleaving") {
  // frames [p,q] then [r,s]; rows are 1-wide for readability
  Tensor<double> f0({2, 1}, {1, 2});  // p=1 q=2
  Tensor<double> f1({2, 1}, {3, 4});  // r=3 s=4
  Tape<double> t;
  std::vector<Var<double>> window{t.constant(f0), t.constant(f1)};
  auto inst = build_instance_sequence(window, InstanceLayout::kInstanceFirst);
  auto temp = build_instance_sequence(window, InstanceLayout::kTemporalFirst);
  CHECK(inst.value().v == std::vector<double>{1, 2, 3, 4});
  CHECK(temp.value().v == std::vector<double>{1, 3, 2, 4});
}

TEST_CASE("instance layouts with no history pass the current frame through") {
  Rng rng(19);
  Tensor<double> q = random_tensor({5, 3}, rng);
  Tape<double> t;
  std::vector<Var<double>> window{t.constant(q)};
  CHECK(build_instance_sequence(window, InstanceLayout::kInstanceFirst).value().v == q.v);
  CHECK(build_instance_sequence(window, InstanceLayout::kTemporalFirst).value().v == q.v);
}

TEST_CASE("current frame positions recover the last frame exactly") {
  Rng rng(23);
  const int64_t n_hist = 3, n_q = 4, d = 2;
  std::vector<Tensor<double>> frames;
  for (int64_t f = 0; f <= n_hist; ++f) frames.push_back(random_tensor({n_q, d}, rng));

  for (InstanceLayout lay : {InstanceLayout::kInstanceFirst, InstanceLayout::kTemporalFirst}) {
    Tensor<double> seq = build_instance_sequence_values(frames, lay);
    auto pos = current_frame_positions(n_hist, n_q, lay);
    // index arithmetic oracle
    for (int64_t m = 0; m < n_q; ++m) {
      const int64_t expect = lay == InstanceLayout::kInstanceFirst ? n_hist * n_q + m
                                                                   : m * (n_hist + 1) + n_hist;
      CHECK(pos[static_cast<size_t>(m)] == expect);
      for (int64_t k = 0; k < d; ++k)
        CHECK(seq.at(pos[static_cast<size_t>(m)], k) == frames.back().at(m, k));
    }
  }
}

TEST_CASE("ragged windows are rejected") {
  Tape<double> t;
  std::vector<Var<double>> window{t.constant(Tensor<double>({2, 3})),
                                  t.constant(Tensor<double>({3, 3}))};
  CHECK_THROWS_AS(build_instance_sequence(window, InstanceLayout::kInstanceFirst),
                  std::invalid_argument);
}
