#pragma once

// Function-fitting harness: datasets, Adam with linear warm-up, learning-rate
// grid search and full-batch timing.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <limits>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "powerkan/autodiff.hpp"
#include "powerkan/convert.hpp"
#include "powerkan/error.hpp"
#include "powerkan/layers.hpp"
#include "powerkan/rng.hpp"
#include "powerkan/special.hpp"
#include "powerkan/tensor.hpp"

namespace powerkan {

struct Dataset {
  std::string name;
  Tensor x_train, y_train;
  Tensor x_test, y_test;

  std::size_t input_dim() const { return x_train.cols(); }
};

/// Split rows into train / test keeping their order; the first
/// round(n * (1 - test_fraction)) rows train.
inline Dataset split_dataset(const Tensor& x, const Tensor& y, double test_fraction, std::string name = {}) {
  if (x.rows() != y.rows()) throw InputError("dataset: inputs and targets differ in row count");
  if (!(test_fraction >= 0 && test_fraction < 1)) throw InputError("dataset: test fraction must be in [0, 1)");
  const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(x.rows()) * (1 - test_fraction)));
  if (n_train == 0) throw InputError("dataset: no training rows");
  auto take = [](const Tensor& t, std::size_t from, std::size_t to) {
    Tensor out(to - from, t.cols());
    std::copy(t.data().begin() + static_cast<std::ptrdiff_t>(from * t.cols()),
              t.data().begin() + static_cast<std::ptrdiff_t>(to * t.cols()), out.data().begin());
    return out;
  };
  Dataset d;
  d.name = std::move(name);
  d.x_train = take(x, 0, n_train);
  d.y_train = take(y, 0, n_train);
  d.x_test = take(x, n_train, x.rows());
  d.y_test = take(y, n_train, y.rows());
  return d;
}

// ---------------------------------------------------------------------------
// Target functions

inline const std::vector<std::string>& function_names() {
  static const std::vector<std::string> names{"ablation_xexp", "bessel_j0", "ellipk", "ellipe"};
  return names;
}

/// Scale of the Bessel target f(x) = J0(kBesselScale * |x|).
inline constexpr double kBesselScale = 2.0;

/// Target value at one input point. Two inputs for every function:
///   ablation_xexp  x1 exp(-x2)
///   bessel_j0      J0(2 |x|)
///   ellipk/ellipe  K(m), E(m) with m = (x1^2 + x2^2) / 4
inline double target_function(const std::string& name, std::span<const double> x) {
  if (x.size() != 2) throw InputError("target '" + name + "' takes two inputs");
  if (name == "ablation_xexp") return x[0] * std::exp(-x[1]);
  if (name == "bessel_j0") return special::bessel_j0(kBesselScale * std::hypot(x[0], x[1]));
  if (name == "ellipk") return special::ellipk((x[0] * x[0] + x[1] * x[1]) / 4);
  if (name == "ellipe") return special::ellipe((x[0] * x[0] + x[1] * x[1]) / 4);
  throw InputError("unknown function '" + name + "'");
}

/// Reject boxes on which the target's evaluator is not valid.
inline void check_function_domain(const std::string& name, const BoxDomain& box) {
  if (std::find(function_names().begin(), function_names().end(), name) == function_names().end()) {
    throw InputError("unknown function '" + name + "'");
  }
  box.validate();
  if (box.dim() != 2) throw InputError("function '" + name + "' needs a 2-dimensional domain");
  double r2 = 0;
  for (std::size_t i = 0; i < 2; ++i) {
    const double a = std::max(std::abs(box.lower[i]), std::abs(box.upper[i]));
    r2 += a * a;
  }
  if (name == "bessel_j0" && kBesselScale * std::sqrt(r2) > special::kBesselMaxArgument) {
    throw InputError("bessel_j0: domain reaches arguments beyond 20");
  }
  if ((name == "ellipk" || name == "ellipe") && r2 / 4 >= 1) {
    throw InputError(name + ": domain reaches parameter m >= 1");
  }
}

/// n_train + n_test points uniform on the box, drawn from the "data" stream.
inline Dataset gen_function_dataset(const std::string& name, std::size_t n_train, std::size_t n_test,
                                    std::uint64_t seed, const BoxDomain& box = BoxDomain::symmetric(2, 1.0)) {
  check_function_domain(name, box);
  if (n_train == 0) throw InputError("dataset needs at least one training point");
  auto rng = make_stream(seed, "data");
  auto fill = [&](std::size_t n, Tensor& x, Tensor& y) {
    x = Tensor(n, 2);
    y = Tensor(n, 1);
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t d = 0; d < 2; ++d) {
        x(s, d) = std::uniform_real_distribution<double>(box.lower[d], box.upper[d])(rng);
      }
      y(s, 0) = target_function(name, x.row(s));
    }
  };
  Dataset d;
  d.name = name;
  fill(n_train, d.x_train, d.y_train);
  fill(n_test, d.x_test, d.y_test);
  return d;
}

// ---------------------------------------------------------------------------
// Training

/// 10 learning rates log-spaced from 1e-4 to 1e-1.
inline std::vector<double> default_lr_grid() {
  std::vector<double> out;
  for (int i = 0; i < 10; ++i) out.push_back(std::pow(10.0, -4.0 + 3.0 * i / 9.0));
  return out;
}

struct TrainConfig {
  std::size_t epochs = 1000;
  std::size_t batch_size = 0;  ///< 0 is full batch
  double lr = 1e-3;
  double warmup_fraction = 0.1;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<double> lr_grid = default_lr_grid();
  bool track_test = true;  ///< evaluate test RMSE every epoch (not timed)

  void validate() const {
    if (epochs == 0) throw InputError("train: epochs must be positive");
    if (!(lr > 0)) throw InputError("train: learning rate must be positive");
    if (!(warmup_fraction >= 0 && warmup_fraction <= 1)) throw InputError("train: warm-up fraction must be in [0, 1]");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && eps > 0)) {
      throw InputError("train: invalid Adam constants");
    }
  }
};

/// Learning rate at a 0-based epoch: linear from lr/10 to lr over the
/// warm-up epochs, constant afterwards.
inline double scheduled_lr(const TrainConfig& cfg, std::size_t epoch) {
  const auto warm = static_cast<std::size_t>(std::ceil(cfg.warmup_fraction * static_cast<double>(cfg.epochs)));
  if (epoch >= warm) return cfg.lr;
  const double f = static_cast<double>(epoch) / static_cast<double>(warm);
  return cfg.lr / 10 + (cfg.lr - cfg.lr / 10) * f;
}

struct EpochRecord {
  std::size_t epoch = 0;
  double train_rmse = 0;  ///< loss of the forward pass that started the epoch
  double test_rmse = 0;   ///< after the epoch's update; NaN when not tracked
  double seconds = 0;     ///< training time elapsed at the end of the epoch
};

struct FitResult {
  double train_rmse = 0;
  double test_rmse = 0;
  std::vector<EpochRecord> curve;
  double seconds = 0;
  double best_lr = 0;
  bool diverged = false;
  std::size_t diverged_epoch = 0;
};

class Adam {
 public:
  Adam(const std::vector<Tensor*>& params, double beta1, double beta2, double eps)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const Tensor* p : params) {
      m_.emplace_back(p->rows(), p->cols());
      v_.emplace_back(p->rows(), p->cols());
    }
  }

  void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads, double lr) {
    ++t_;
    const double c1 = 1 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto p = params[i]->data();
      const auto g = grads[i]->data();
      auto m = m_[i].data();
      auto v = v_[i].data();
      for (std::size_t j = 0; j < p.size(); ++j) {
        m[j] = beta1_ * m[j] + (1 - beta1_) * g[j];
        v[j] = beta2_ * v[j] + (1 - beta2_) * g[j] * g[j];
        p[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
      }
    }
  }

 private:
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

inline double evaluate_rmse(const Network& net, const Tensor& x, const Tensor& y) {
  if (x.rows() == 0) return std::numeric_limits<double>::quiet_NaN();
  return ops::rmse(network_forward(net, x), y);
}

namespace detail {

inline Tensor gather_rows(const Tensor& t, const std::vector<std::size_t>& idx, std::size_t from, std::size_t to) {
  Tensor out(to - from, t.cols());
  for (std::size_t i = from; i < to; ++i) {
    const auto src = t.row(idx[i]);
    std::copy(src.begin(), src.end(), out.row(i - from).begin());
  }
  return out;
}

}  // namespace detail

/// Train in place. Stops at the first non-finite loss or gradient and marks
/// the result diverged.
inline FitResult train(Network& net, const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  net.validate();
  if (data.x_train.cols() != net.input_dim || data.y_train.cols() != net.output_dim()) {
    throw InputError("train: dataset is " + std::to_string(data.x_train.cols()) + " -> " +
                     std::to_string(data.y_train.cols()) + ", network is " + std::to_string(net.input_dim) +
                     " -> " + std::to_string(net.output_dim()));
  }
  using clock = std::chrono::steady_clock;
  const std::vector<Tensor*> params = network_parameters(net);
  Adam adam(params, cfg.beta1, cfg.beta2, cfg.eps);
  auto batch_rng = make_stream(cfg.seed, "batch");
  const std::size_t n = data.x_train.rows();
  const std::size_t bs = cfg.batch_size == 0 ? n : std::min(cfg.batch_size, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  FitResult res;
  res.best_lr = cfg.lr;
  res.curve.reserve(cfg.epochs);
  clock::duration trained{0};
  std::vector<const Tensor*> grads(params.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs && !res.diverged; ++epoch) {
    const auto t0 = clock::now();
    const double lr = scheduled_lr(cfg, epoch);
    if (bs < n) std::shuffle(order.begin(), order.end(), batch_rng);
    double sq_sum = 0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t stop = std::min(n, start + bs);
      ad::Tape tape;
      TapedForward fwd;
      ad::NodeId loss{};
      if (bs == n) {
        fwd = network_forward_taped(net, data.x_train, tape);
        loss = ad::rmse_loss(tape, fwd.output, tape.constant(data.y_train));
      } else {
        fwd = network_forward_taped(net, detail::gather_rows(data.x_train, order, start, stop), tape);
        loss = ad::rmse_loss(tape, fwd.output, tape.constant(detail::gather_rows(data.y_train, order, start, stop)));
      }
      const double l = tape.value(loss)(0, 0);
      sq_sum += l * l * static_cast<double>(stop - start);
      if (!std::isfinite(l)) {
        res.diverged = true;
        break;
      }
      try {
        auto g = tape.backward(loss);
        for (std::size_t i = 0; i < params.size(); ++i) grads[i] = &g.at(fwd.parameters[i]);
        adam.step(params, grads, lr);
      } catch (const NumericError&) {
        res.diverged = true;
        break;
      }
    }
    trained += clock::now() - t0;
    if (res.diverged) {
      res.diverged_epoch = epoch;
      break;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_rmse = std::sqrt(sq_sum / static_cast<double>(n));
    rec.seconds = std::chrono::duration<double>(trained).count();
    rec.test_rmse = cfg.track_test ? evaluate_rmse(net, data.x_test, data.y_test)
                                   : std::numeric_limits<double>::quiet_NaN();
    res.curve.push_back(rec);
  }
  res.seconds = std::chrono::duration<double>(trained).count();
  if (res.diverged) {
    res.train_rmse = res.test_rmse = std::numeric_limits<double>::quiet_NaN();
    return res;
  }
  res.train_rmse = evaluate_rmse(net, data.x_train, data.y_train);
  res.test_rmse = evaluate_rmse(net, data.x_test, data.y_test);
  if (!std::isfinite(res.train_rmse) || (data.x_test.rows() > 0 && !std::isfinite(res.test_rmse))) {
    res.diverged = true;
    res.diverged_epoch = cfg.epochs;
  }
  return res;
}

struct LrOutcome {
  double lr = 0;
  double test_rmse = 0;
  bool diverged = false;
};

struct GridSearchResult {
  FitResult best;
  Network best_net;
  std::vector<LrOutcome> outcomes;
};

/// Train one fresh network per learning rate and keep the lowest test RMSE;
/// ties go to the smaller learning rate.
inline GridSearchResult grid_search(const std::function<Network()>& factory, const Dataset& data,
                                    const std::vector<double>& lrs, const TrainConfig& base) {
  if (lrs.empty()) throw InputError("grid search needs at least one learning rate");
  std::vector<double> sorted = lrs;
  std::sort(sorted.begin(), sorted.end());
  GridSearchResult out;
  bool found = false;
  for (double lr : sorted) {
    TrainConfig cfg = base;
    cfg.lr = lr;
    Network net = factory();
    FitResult r = train(net, data, cfg);
    const bool ok = !r.diverged && std::isfinite(r.test_rmse);
    out.outcomes.push_back({lr, r.test_rmse, !ok});
    if (ok && (!found || r.test_rmse < out.best.test_rmse)) {
      out.best = std::move(r);
      out.best_net = std::move(net);
      found = true;
    }
  }
  if (!found) {
    std::ostringstream os;
    os << "grid search: every learning rate diverged (";
    for (std::size_t i = 0; i < out.outcomes.size(); ++i) {
      os << (i ? ", " : "") << "lr=" << out.outcomes[i].lr << ": diverged";
    }
    os << ")";
    throw NumericError(os.str());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Timing

struct BenchResult {
  std::string name;
  std::vector<double> seconds;

  double mean() const {
    return seconds.empty() ? 0.0 : std::accumulate(seconds.begin(), seconds.end(), 0.0) / static_cast<double>(seconds.size());
  }
};

/// Full-batch training time per network, repeated `repeats` times from the
/// same initial parameters. The clock runs from before the first forward pass
/// to after the last update.
inline std::vector<BenchResult> timing_bench(const std::vector<Network>& nets, const Dataset& data,
                                             const TrainConfig& base, std::size_t repeats) {
  if (repeats == 0) throw InputError("bench: repeats must be positive");
  TrainConfig cfg = base;
  cfg.batch_size = 0;
  cfg.track_test = false;
  std::vector<BenchResult> out;
  for (const auto& proto : nets) {
    BenchResult b;
    b.name = proto.name;
    for (std::size_t r = 0; r < repeats; ++r) {
      Network net = proto;
      b.seconds.push_back(train(net, data, cfg).seconds);
    }
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace powerkan
