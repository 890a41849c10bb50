#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>
#include <vector>

#include "lcmpc/intent.hpp"

using namespace lcmpc;

namespace {

JointState random_joint(std::mt19937& rng) {
  std::uniform_real_distribution<double> un(-1.0, 1.0);
  JointState j;
  j.ego = {10 * un(rng), 2 * un(rng), 22 + 4 * un(rng), 0.4 * un(rng)};
  j.target = {10 * un(rng), 4.0, 22 + 4 * un(rng), 0.1 * un(rng)};
  return j;
}

std::vector<Observation> synthetic_data(int n, std::mt19937& rng) {
  // Separable rule: brake whenever the ego is ahead longitudinally.
  std::vector<Observation> data;
  for (int i = 0; i < n; ++i) {
    Observation obs;
    obs.state = random_joint(rng);
    obs.maneuver = obs.state.ego.px > obs.state.target.px ? Maneuver::kBrake
                                                          : Maneuver::kTrack;
    data.push_back(obs);
  }
  return data;
}

}  // namespace

TEST_CASE("feature map structure") {
  FeatureMap f;
  std::mt19937 rng(3);
  const JointState j = random_joint(rng);
  const Eigen::VectorXd phi = f.eval(j);
  REQUIRE(phi.size() == 5);
  CHECK(phi[0] == doctest::Approx(1.0));
  const Eigen::Vector4d d = j.ego.vec() - j.target.vec();
  for (int i = 0; i < 4; ++i) {
    CHECK(phi[i + 1] == doctest::Approx(d[i] / f.scales[i]));
  }
  // Constant Jacobian against finite differences.
  const Eigen::MatrixXd jac = f.state_jacobian();
  REQUIRE(jac.rows() == 5);
  REQUIRE(jac.cols() == 8);
  const double h = 1e-6;
  for (int c = 0; c < 8; ++c) {
    Eigen::Matrix<double, 8, 1> zp = j.vec(), zm = j.vec();
    zp[c] += h;
    zm[c] -= h;
    const Eigen::VectorXd fd =
        (f.eval(JointState::from_vec(zp)) - f.eval(JointState::from_vec(zm))) / (2 * h);
    CHECK((jac.col(c) - fd).lpNorm<Eigen::Infinity>() < 1e-8);
  }
}

TEST_CASE("prediction is a proper distribution with correct state Jacobian") {
  std::mt19937 rng(9);
  IntentModel model = IntentModel::zero(FeatureMap{});
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < model.theta.size(); ++i) {
    model.theta.data()[i] = gauss(rng);
  }
  for (int trial = 0; trial < 50; ++trial) {
    const JointState j = random_joint(rng);
    const Eigen::VectorXd p = model.predict(j);
    REQUIRE(p.size() == 2);
    CHECK(p.minCoeff() > 0.0);
    CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));

    const Eigen::MatrixXd jac = model.predict_state_jacobian(j);
    const double h = 1e-6;
    for (int c = 0; c < 8; ++c) {
      Eigen::Matrix<double, 8, 1> zp = j.vec(), zm = j.vec();
      zp[c] += h;
      zm[c] -= h;
      const Eigen::VectorXd fd = (model.predict(JointState::from_vec(zp)) -
                                  model.predict(JointState::from_vec(zm))) /
                                 (2 * h);
      CHECK((jac.col(c) - fd).lpNorm<Eigen::Infinity>() < 1e-7);
    }
  }
}

TEST_CASE("fitting objective gradient matches finite differences") {
  std::mt19937 rng(21);
  const auto data = synthetic_data(40, rng);
  FeatureMap features;
  Eigen::MatrixXd theta = Eigen::MatrixXd::Random(5, 2) * 0.5;
  Eigen::MatrixXd center = Eigen::MatrixXd::Random(5, 2) * 0.5;
  Eigen::MatrixXd grad;
  const double f0 =
      intent_objective(theta, data, features, 1e-3, &center, 0.7, &grad);
  CHECK(std::isfinite(f0));
  REQUIRE(grad.rows() == 5);
  REQUIRE(grad.cols() == 2);
  const double h = 1e-6;
  for (int i = 0; i < theta.size(); ++i) {
    Eigen::MatrixXd tp = theta, tm = theta;
    tp.data()[i] += h;
    tm.data()[i] -= h;
    const double fp = intent_objective(tp, data, features, 1e-3, &center, 0.7, nullptr);
    const double fm = intent_objective(tm, data, features, 1e-3, &center, 0.7, nullptr);
    CHECK(grad.data()[i] == doctest::Approx((fp - fm) / (2 * h)).epsilon(1e-5));
  }
}

TEST_CASE("offline fit reaches a stationary point and separates the data") {
  std::mt19937 rng(33);
  const auto data = synthetic_data(300, rng);
  FeatureMap features;
  const IntentModel model = fit_offline(data, features, 1e-3);
  Eigen::MatrixXd grad;
  const double loss =
      intent_objective(model.theta, data, features, 1e-3, nullptr, 0.0, &grad);
  CHECK(grad.norm() <= 1e-5 * (1.0 + std::abs(loss)));
  int wrong = 0;
  for (const Observation& obs : data) {
    const Eigen::VectorXd p = model.predict(obs.state);
    Eigen::Index arg = 0;
    p.maxCoeff(&arg);
    wrong += static_cast<int>(arg) != static_cast<int>(obs.maneuver);
  }
  CHECK(wrong <= static_cast<int>(0.05 * data.size()));
}

TEST_CASE("online update optimality and proximal pull") {
  std::mt19937 rng(55);
  FeatureMap features;
  IntentModel prev = IntentModel::zero(features);
  prev.theta = Eigen::MatrixXd::Random(5, 2) * 0.3;

  ObservationWindow window(10);
  for (const Observation& obs : synthetic_data(10, rng)) {
    window.push(obs);
  }
  SUBCASE("stationary point of the proximal objective") {
    const IntentModel next = update_online(prev, window, 1.0);
    const auto items = window.items();
    Eigen::MatrixXd grad;
    const double loss = intent_objective(next.theta, items, features, 0.0,
                                         &prev.theta, 1.0, &grad);
    CHECK(grad.norm() <= 1e-5 * (1.0 + std::abs(loss)));
  }
  SUBCASE("large proximal weight freezes the parameters") {
    const IntentModel next = update_online(prev, window, 1e9);
    CHECK((next.theta - prev.theta).norm() < 1e-6);
  }
}

TEST_CASE("observation window is a bounded ring") {
  ObservationWindow w(3);
  CHECK(w.empty());
  std::mt19937 rng(1);
  for (int i = 0; i < 5; ++i) {
    Observation obs;
    obs.state = random_joint(rng);
    obs.state.ego.px = i;
    obs.maneuver = Maneuver::kTrack;
    w.push(obs);
  }
  CHECK(w.size() == 3);
  const auto items = w.items();
  CHECK(items.front().state.ego.px == doctest::Approx(2.0));
  CHECK(items.back().state.ego.px == doctest::Approx(4.0));
}

TEST_CASE("maneuver labeling picks the nearest base policy, ties brake") {
  TargetParams nominal;
  JointState j;
  j.target = {0, 4, 24, 0};  // brake raw -16.8 -> clip -5; track 0.7*4 = 2.8
  CHECK(label_maneuver(-4.0, j, nominal) == Maneuver::kBrake);
  CHECK(label_maneuver(2.5, j, nominal) == Maneuver::kTrack);
  const double mid = 0.5 * (-5.0 + 2.8);  // equidistant
  CHECK(label_maneuver(mid, j, nominal) == Maneuver::kBrake);
}

TEST_CASE("model JSON round trip") {
  IntentModel model = IntentModel::zero(FeatureMap{});
  model.theta = Eigen::MatrixXd::Random(5, 2);
  const std::string path = "/tmp/lcmpc_test_model.json";
  model.save(path);
  const IntentModel back = IntentModel::load(path);
  CHECK((back.theta - model.theta).norm() < 1e-12);
  CHECK((back.features.scales - model.features.scales).norm() < 1e-12);
  std::remove(path.c_str());
}
