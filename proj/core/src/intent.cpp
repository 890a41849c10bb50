#include "lcmpc/intent.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace lcmpc {

Eigen::VectorXd FeatureMap::eval(const JointState& joint) const {
  const Eigen::Vector4d diff = joint.ego.vec() - joint.target.vec();
  Eigen::VectorXd phi(size());
  phi[0] = 1.0;
  for (int i = 0; i < 4; ++i) {
    phi[1 + i] = diff[i] / scales[i];
  }
  if (!phi.allFinite()) {
    throw std::invalid_argument("FeatureMap: non-finite features");
  }
  return phi;
}

Eigen::MatrixXd FeatureMap::state_jacobian() const {
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(size(), 8);
  for (int i = 0; i < 4; ++i) {
    jac(1 + i, i) = 1.0 / scales[i];
    jac(1 + i, 4 + i) = -1.0 / scales[i];
  }
  return jac;
}

namespace {

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const Eigen::VectorXd shifted = logits.array() - logits.maxCoeff();
  Eigen::VectorXd p = shifted.array().exp();
  return p / p.sum();
}

}  // namespace

Eigen::VectorXd IntentModel::predict(const JointState& joint) const {
  return softmax(theta.transpose() * features.eval(joint));
}

Eigen::MatrixXd IntentModel::predict_state_jacobian(const JointState& joint) const {
  const Eigen::VectorXd p = predict(joint);
  const Eigen::MatrixXd phi_jac = features.state_jacobian();  // n_feat x 8
  // d p_i / d phi = p_i (theta_i - sum_j p_j theta_j)
  const Eigen::VectorXd mean_theta_phi = theta * p;  // n_feat
  Eigen::MatrixXd jac(num_modes(), 8);
  for (int i = 0; i < num_modes(); ++i) {
    const Eigen::VectorXd d = p[i] * (theta.col(i) - mean_theta_phi);
    jac.row(i) = d.transpose() * phi_jac;
  }
  return jac;
}

IntentModel IntentModel::zero(const FeatureMap& features, int num_modes) {
  IntentModel m;
  m.features = features;
  m.theta = Eigen::MatrixXd::Zero(features.size(), num_modes);
  return m;
}

void IntentModel::save(const std::string& path) const {
  nlohmann::json j;
  j["n_feat"] = theta.rows();
  j["n_modes"] = theta.cols();
  j["scales"] = {features.scales[0], features.scales[1], features.scales[2],
                 features.scales[3]};
  std::vector<double> flat;
  flat.reserve(theta.size());
  for (int r = 0; r < theta.rows(); ++r) {
    for (int c = 0; c < theta.cols(); ++c) {
      flat.push_back(theta(r, c));
    }
  }
  j["theta"] = flat;
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("IntentModel::save: cannot open " + path);
  }
  out << j.dump(2) << "\n";
}

IntentModel IntentModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("IntentModel::load: cannot open " + path);
  }
  nlohmann::json j;
  in >> j;
  IntentModel m;
  const int n_feat = j.at("n_feat");
  const int n_modes = j.at("n_modes");
  const auto scales = j.at("scales").get<std::vector<double>>();
  for (int i = 0; i < 4; ++i) {
    m.features.scales[i] = scales.at(i);
  }
  const auto flat = j.at("theta").get<std::vector<double>>();
  if (static_cast<int>(flat.size()) != n_feat * n_modes) {
    throw std::runtime_error("IntentModel::load: theta size mismatch");
  }
  m.theta.resize(n_feat, n_modes);
  for (int r = 0; r < n_feat; ++r) {
    for (int c = 0; c < n_modes; ++c) {
      m.theta(r, c) = flat[r * n_modes + c];
    }
  }
  return m;
}

void ObservationWindow::push(const Observation& obs) {
  buffer_.push_back(obs);
  while (static_cast<int>(buffer_.size()) > capacity_) {
    buffer_.pop_front();
  }
}

double intent_objective(const Eigen::MatrixXd& theta, std::span<const Observation> data,
                        const FeatureMap& features, double ridge,
                        const Eigen::MatrixXd* prox_center, double lambda,
                        Eigen::MatrixXd* grad) {
  const int n_modes = static_cast<int>(theta.cols());
  double loss = 0.0;
  if (grad != nullptr) {
    grad->setZero(theta.rows(), theta.cols());
  }
  for (const Observation& obs : data) {
    const int w = static_cast<int>(obs.maneuver);
    if (w < 0 || w >= n_modes) {
      throw std::invalid_argument("intent_objective: maneuver id out of range");
    }
    const Eigen::VectorXd phi = features.eval(obs.state);
    const Eigen::VectorXd logits = theta.transpose() * phi;
    const double lmax = logits.maxCoeff();
    const double lse = lmax + std::log((logits.array() - lmax).exp().sum());
    loss += lse - logits[w];
    if (grad != nullptr) {
      const Eigen::VectorXd p = softmax(logits);
      for (int i = 0; i < n_modes; ++i) {
        grad->col(i) += (p[i] - (i == w ? 1.0 : 0.0)) * phi;
      }
    }
  }
  if (ridge > 0.0) {
    loss += ridge * theta.squaredNorm();
    if (grad != nullptr) {
      *grad += 2.0 * ridge * theta;
    }
  }
  if (prox_center != nullptr) {
    const Eigen::MatrixXd diff = theta - *prox_center;
    loss += lambda * diff.squaredNorm();
    if (grad != nullptr) {
      *grad += 2.0 * lambda * diff;
    }
  }
  return loss;
}

namespace {

/// Damped Newton minimization of the logistic objective. The Hessian of the
/// multinomial NLL is sum_k (diag(p) - p p') kron (phi phi'); ridge, proximal
/// and a small Levenberg term keep it positive definite.
Eigen::MatrixXd minimize_logistic(const Eigen::MatrixXd& theta0,
                                  std::span<const Observation> data,
                                  const FeatureMap& features, double ridge,
                                  const Eigen::MatrixXd* prox_center, double lambda) {
  const int n_feat = static_cast<int>(theta0.rows());
  const int n_modes = static_cast<int>(theta0.cols());
  const int dim = n_feat * n_modes;

  Eigen::MatrixXd theta = theta0;
  Eigen::MatrixXd grad(n_feat, n_modes);
  double loss = intent_objective(theta, data, features, ridge, prox_center, lambda, &grad);

  constexpr int kMaxIter = 200;
  for (int iter = 0; iter < kMaxIter; ++iter) {
    if (grad.norm() <= 1e-6 * (1.0 + std::abs(loss))) {
      break;
    }
    // Assemble dense Hessian, vec order: (mode-major blocks of size n_feat).
    Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(dim, dim);
    for (const Observation& obs : data) {
      const Eigen::VectorXd phi = features.eval(obs.state);
      const Eigen::VectorXd p = softmax(theta.transpose() * phi);
      const Eigen::MatrixXd outer = phi * phi.transpose();
      for (int i = 0; i < n_modes; ++i) {
        for (int j = 0; j < n_modes; ++j) {
          const double w = (i == j ? p[i] : 0.0) - p[i] * p[j];
          hess.block(i * n_feat, j * n_feat, n_feat, n_feat) += w * outer;
        }
      }
    }
    double diag = 2.0 * ridge + 1e-9 * (1.0 + std::abs(loss));
    if (prox_center != nullptr) {
      diag += 2.0 * lambda;
    }
    hess.diagonal().array() += diag;

    Eigen::VectorXd g(dim);
    for (int i = 0; i < n_modes; ++i) {
      g.segment(i * n_feat, n_feat) = grad.col(i);
    }
    const Eigen::VectorXd dvec = hess.ldlt().solve(-g);
    Eigen::MatrixXd dir(n_feat, n_modes);
    for (int i = 0; i < n_modes; ++i) {
      dir.col(i) = dvec.segment(i * n_feat, n_feat);
    }

    // Backtracking on the objective.
    double alpha = 1.0;
    const double slope = g.dot(dvec);
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      const Eigen::MatrixXd trial = theta + alpha * dir;
      const double trial_loss =
          intent_objective(trial, data, features, ridge, prox_center, lambda, nullptr);
      if (std::isfinite(trial_loss) && trial_loss <= loss + 1e-4 * alpha * slope) {
        theta = trial;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      break;
    }
    loss = intent_objective(theta, data, features, ridge, prox_center, lambda, &grad);
  }
  return theta;
}

}  // namespace

IntentModel fit_offline(std::span<const Observation> data, const FeatureMap& features,
                        double ridge) {
  if (data.empty()) {
    throw std::invalid_argument("fit_offline: empty dataset");
  }
  IntentModel model = IntentModel::zero(features);
  model.theta = minimize_logistic(model.theta, data, features, ridge, nullptr, 0.0);
  return model;
}

IntentModel update_online(const IntentModel& model, const ObservationWindow& window,
                          double lambda) {
  if (window.empty()) {
    throw std::invalid_argument("update_online: empty window");
  }
  if (lambda <= 0.0) {
    throw std::invalid_argument("update_online: lambda must be positive");
  }
  const std::vector<Observation> data = window.items();
  IntentModel next = model;
  next.theta = minimize_logistic(model.theta, data, model.features, 0.0, &model.theta, lambda);
  return next;
}

Maneuver label_maneuver(double observed_accel, const JointState& joint,
                        const TargetParams& nominal) {
  const double err_brake =
      std::abs(observed_accel - base_acceleration(joint, Maneuver::kBrake, nominal));
  const double err_track =
      std::abs(observed_accel - base_acceleration(joint, Maneuver::kTrack, nominal));
  return err_brake <= err_track ? Maneuver::kBrake : Maneuver::kTrack;
}

}  // namespace lcmpc
