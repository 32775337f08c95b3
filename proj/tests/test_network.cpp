#include "doctest.h"
#include "helpers.hpp"

#include <cmath>

#include "graphbandit/error.hpp"
#include "graphbandit/network.hpp"

using namespace graphbandit;
using namespace testing;

namespace {

// Central differences of gnn_forward_raw in double precision.
double fd_coordinate(const Eigen::MatrixXd& rows, const NetworkParams<double>& p, Eigen::Index i,
                     double h) {
  Eigen::VectorXd up = p.theta(), down = p.theta();
  up(i) += h;
  down(i) -= h;
  return (gnn_forward_raw(rows, p.with_theta(up)) - gnn_forward_raw(rows, p.with_theta(down))) / (2 * h);
}

}  // namespace

TEST_CASE("network shape and layout") {
  const NetworkShape s(8, 3, 5);
  CHECK(s.num_params() == 8 * 5 + 2 * 64 + 8);
  CHECK(s.block_offset(1) == 0);
  CHECK(s.block_offset(2) == 40);
  CHECK(s.block_offset(3) == 104);
  CHECK(s.block_offset(4) == 168);
  CHECK(s.block_rows(4) == 1);
  CHECK(s.block_cols(1) == 5);
  CHECK_THROWS_AS(NetworkParams<double>(s, Eigen::VectorXd::Zero(3)), LengthMismatch);
}

TEST_CASE("init_params") {
  const auto p = init_params<double>(4096, 1, 10, 3);
  const auto w1 = p.layer(1);
  CHECK(std::abs(w1.mean()) < 3.0 / std::sqrt(4096.0 * 10.0));
  CHECK(init_params<double>(16, 2, 3, 3).theta() == init_params<double>(16, 2, 3, 3).theta());
  CHECK_FALSE(init_params<double>(16, 2, 3, 3).theta() == init_params<double>(16, 2, 3, 4).theta());
  const auto q = init_params<double>(16, 2, 3, 5);
  CHECK(q.frozen_init() == q.theta());
  const auto moved = q.with_theta(Eigen::VectorXd::Zero(q.shape().num_params()));
  CHECK(moved.frozen_init() == q.theta());
  CHECK(q.layer(2)(3, 4) == q.theta()(q.shape().block_offset(2) + 3 * 16 + 4));
}

TEST_CASE("nn_forward") {
  const NetworkShape s(1, 1, 2);
  const NetworkParams<double> p(s, Eigen::Vector3d(1, 0, 1));
  CHECK(nn_forward(Eigen::Vector2d(1, 0), p) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(nn_forward(Eigen::Vector2d(-1, 0), p) == 0.0);
  const NetworkParams<double> zero(NetworkShape(8, 2, 3), Eigen::VectorXd::Zero(NetworkShape(8, 2, 3).num_params()));
  CHECK(nn_forward(random_unit(3, 1), zero) == 0.0);

  const auto q = init_params<double>(32, 2, 4, 1);
  const auto x = random_unit(4, 2);
  CHECK(std::abs(nn_forward(x, q) - nn_forward(Eigen::VectorXd(-x), q)) > 1e-6);

  // Two-layer hand evaluation.
  const auto r = init_params<double>(3, 2, 2, 7);
  const Eigen::Vector2d z(0.6, 0.8);
  const Eigen::VectorXd h1 = (r.layer(1) * z).cwiseMax(0.0);
  const Eigen::VectorXd h2 = (std::sqrt(2.0 / 3.0) * r.layer(2) * h1).cwiseMax(0.0);
  const double expect = std::sqrt(2.0) * (r.layer(3) * h2)(0);
  CHECK(std::abs(nn_forward(z, r) - expect) < 1e-14);
}

TEST_CASE("gnn forward") {
  const auto p = init_params<double>(32, 2, 4, 11);
  const auto single = random_agg(1, 4, 0.5, 3);
  CHECK(std::abs(gnn_forward_raw(single, p) - nn_forward(Eigen::VectorXd(single.row(0).transpose()), p)) < 1e-14);

  Eigen::MatrixXd same(3, 4);
  const auto x = random_unit(4, 5);
  for (int i = 0; i < 3; ++i) same.row(i) = x.transpose();
  CHECK(std::abs(gnn_forward_raw(same, p) - nn_forward(x, p)) < 1e-14);

  const auto g = random_agg(6, 4, 0.4, 8);
  CHECK(gnn_forward(g, p) == 0.0);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto moved = permute(g, Permutation::random(6, 1, s));
    CHECK(std::abs(gnn_forward_raw(moved, p) - gnn_forward_raw(g, p)) < 1e-12);
  }

  const auto pf = init_params<float>(32, 2, 4, 11);
  CHECK(std::abs(double(gnn_forward_raw(g, pf)) - gnn_forward_raw(g, p)) < 1e-4);

  const std::vector<AggregatedGraph> gs = {g, single, random_agg(6, 4, 0.4, 9)};
  const auto batch = make_batch<double>(std::span<const AggregatedGraph>(gs));
  const auto out = forward_raw_batch(batch, p);
  for (std::size_t i = 0; i < gs.size(); ++i) CHECK(std::abs(out(Eigen::Index(i)) - gnn_forward_raw(gs[i], p)) < 1e-12);
}

TEST_CASE("gradient against central differences") {
  const auto p = init_params<double>(64, 2, 5, 21);
  const auto g = random_agg(5, 5, 0.4, 2);
  const auto grad = gnn_gradient(g, p);
  REQUIRE(grad.size() == p.shape().num_params());
  KeyedRng rng(4, "coords");
  int checked = 0;
  while (checked < 40) {
    const auto i = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(grad.size())));
    const double fd = fd_coordinate(g.hbar(), p, i, 1e-4);
    if (std::abs(grad(i)) < 1e-6 && std::abs(fd) < 1e-6) continue;
    CHECK(std::abs(fd - grad(i)) / std::max(std::abs(grad(i)), 1e-8) < 1e-4);
    ++checked;
  }

  const auto moved = permute(g, Permutation::random(5, 3, 0));
  CHECK((gnn_gradient(moved, p) - grad).cwiseAbs().maxCoeff() < 1e-12);

  const Eigen::MatrixXd zeros = Eigen::MatrixXd::Zero(3, 5);
  const auto gz = gnn_gradient(zeros, p);
  CHECK(gz.head(64 * 5).isZero());

  // The frozen term is constant in theta.
  const auto moved_theta = p.with_theta(p.theta() * 1.01);
  const auto gm = gnn_gradient(g, moved_theta);
  for (Eigen::Index i : {Eigen::Index(3), Eigen::Index(400), grad.size() - 1}) {
    Eigen::VectorXd up = moved_theta.theta(), down = moved_theta.theta();
    up(i) += 1e-4;
    down(i) -= 1e-4;
    const double fd = (gnn_forward(g, p.with_theta(up)) - gnn_forward(g, p.with_theta(down))) / 2e-4;
    CHECK(std::abs(fd - gm(i)) < 1e-6 * std::max(1.0, std::abs(gm(i))));
  }

  const std::vector<AggregatedGraph> gs = {g, random_agg(5, 5, 0.4, 3)};
  const auto batch = make_batch<double>(std::span<const AggregatedGraph>(gs));
  const auto wg = weighted_gradient(batch, Eigen::Vector2d(0.5, -2.0), p);
  CHECK((wg - (0.5 * grad - 2.0 * gnn_gradient(gs[1], p))).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("tangent kernel") {
  const auto p = init_params<double>(64, 2, 4, 1);
  const auto a = random_agg(4, 4, 0.5, 1), b = random_agg(4, 4, 0.5, 2);
  CHECK(tangent_kernel_finite(a, b, p) == doctest::Approx(tangent_kernel_finite(b, a, p)).epsilon(1e-14));
  const double direct = gnn_gradient(a, p).dot(gnn_gradient(b, p)) / (64.0 * 3.0);
  CHECK(std::abs(tangent_kernel_finite(a, b, p) - direct) < 1e-12);

  const std::vector<AggregatedGraph> gs = {a, b, random_agg(4, 4, 0.5, 3)};
  const auto k = tangent_gram(std::span<const AggregatedGraph>(gs), p);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(std::abs(k.entries(i, j) - tangent_kernel_finite(gs[size_t(i)], gs[size_t(j)], p)) < 1e-10);
}

TEST_CASE("training set grouping") {
  const std::vector<int> g = {0, 2, 0, 0};
  const std::vector<double> y = {1.0, 5.0, 2.0, 3.0};
  const auto t = make_training_set(g, y, 3);
  CHECK(t.counts == std::vector<int>{3, 0, 1});
  CHECK(t.targets(0) == doctest::Approx(2.0));
  CHECK(t.targets(2) == doctest::Approx(5.0));
  CHECK(t.residual == doctest::Approx(2.0));
  CHECK(t.total() == 4.0);
  CHECK_THROWS_AS(make_training_set(g, std::vector<double>{1.0}, 3), LengthMismatch);
}

TEST_CASE("training") {
  const auto g = random_agg(5, 4, 0.4, 6);
  const std::vector<AggregatedGraph> gs = {g};
  const auto batch = make_batch<double>(std::span<const AggregatedGraph>(gs));
  const std::vector<int> idx = {0};
  const std::vector<double> y = {0.7};
  const auto data = make_training_set(idx, y, 1);

  SUBCASE("one plain-gd step equals -eta grad") {
    const auto p = init_params<double>(32, 2, 4, 2);
    TrainConfig cfg;
    cfg.optimizer = Optimizer::plain_gd;
    cfg.eta = 1e-3;
    cfg.lambda = 0.5;
    cfg.max_steps = 1;
    const auto r = train(batch, data, p, cfg);
    CHECK(r.stats.steps == 1);
    // loss (f - y)^2 with f(theta0) = 0: grad = -2 y g, regulariser grad vanishes at theta0
    const Eigen::VectorXd expect = p.theta() + cfg.eta * 2.0 * 0.7 * gnn_gradient(g, p);
    CHECK((r.params.theta() - expect).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(r.params.frozen_init() == p.theta());
    cfg.max_steps = 0;
    CHECK_THROWS_AS(train(batch, data, p, cfg), InvalidArgument);
  }

  SUBCASE("overfits one point") {
    const auto p = init_params<double>(256, 2, 4, 3);
    TrainConfig cfg;
    cfg.max_steps = 2000;
    cfg.stop_rel_decay = 0.0;
    const auto r = train(batch, data, p, cfg);
    CHECK(r.stats.final_loss < 1e-4);
    CHECK(std::abs(gnn_forward(g, r.params) - 0.7) < 0.05);
    CHECK(training_loss(batch, data, r.params, 0.0) == doctest::Approx(r.stats.final_loss).epsilon(1e-9));
  }

  SUBCASE("regulariser pins parameters") {
    const auto p = init_params<double>(64, 2, 4, 4);
    TrainConfig cfg;
    cfg.optimizer = Optimizer::plain_gd;
    cfg.eta = 1e-4;
    cfg.max_steps = 50;
    cfg.stop_rel_decay = 0.0;
    cfg.stop_loss = 0.0;
    const auto free = train(batch, data, p, cfg);
    cfg.lambda = 1e3;
    cfg.eta = 1e-6;
    const auto pinned = train(batch, data, p, cfg);
    CHECK((pinned.params.theta() - p.theta()).norm() < (free.params.theta() - p.theta()).norm());
  }

  SUBCASE("float training") {
    const auto p = init_params<float>(64, 2, 4, 3);
    const auto bf = make_batch<float>(std::span<const AggregatedGraph>(gs));
    TrainConfig cfg;
    const auto r = train(bf, data, p, cfg);
    CHECK(r.stats.final_loss < r.stats.initial_loss);
  }

  SUBCASE("non-finite loss is reported") {
    const auto p = init_params<double>(64, 2, 4, 4);
    const std::vector<double> huge = {1e300};
    TrainConfig cfg;
    CHECK_THROWS_AS(train(batch, make_training_set(idx, huge, 1), p, cfg), NonFiniteLoss);
  }
}
