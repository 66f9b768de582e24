#pragma once

// Timing suite: the reference timing shapes at desk scale.

#include <string>
#include <vector>

#include "powerkan/flops.hpp"
#include "powerkan/model_spec.hpp"
#include "powerkan/train.hpp"

namespace powerkan {

struct SuiteEntry {
  std::string task;
  ModelSpec kan;
  ModelSpec mlp;
  ModelSpec powermlp;
  std::size_t epochs = 0;
};

inline std::vector<SuiteEntry> timing_suite() {
  auto spec = [](const char* s) { return parse_model_spec(s); };
  return {
      {"small", spec("kan:[2,1,1]:k=3:G=3"), spec("mlp:[2,6,1]"), spec("powermlp:[2,4,1]:k=3"), 200},
      {"titanic", spec("kan:[9,1,2]:k=3:G=3"), spec("mlp:[9,8,2]"), spec("powermlp:[9,4,2]:k=3"), 200},
      {"spam", spec("kan:[100,1,2]:k=3:G=3"), spec("mlp:[100,8,2]"), spec("powermlp:[100,4,2]:k=3"), 100},
      {"svhn", spec("kan:[1024,16,16,10]:k=3:G=3"), spec("mlp:[1024,128,64,10]"),
       spec("powermlp:[1024,64,64,10]:k=3"), 5},
  };
}

/// Uniform inputs on [-1, 1] and uniform targets on [0, 1], from the "data" stream.
inline Dataset random_dataset(std::size_t n, std::size_t in, std::size_t out, std::uint64_t seed) {
  auto rng = make_stream(seed, "data");
  std::uniform_real_distribution<double> ux(-1.0, 1.0), uy(0.0, 1.0);
  Dataset d;
  d.name = "random";
  d.x_train = Tensor(n, in);
  d.y_train = Tensor(n, out);
  for (double& v : d.x_train.data()) v = ux(rng);
  for (double& v : d.y_train.data()) v = uy(rng);
  return d;
}

struct SuiteResult {
  std::string task;
  BenchResult mlp;
  BenchResult powermlp;
  double kan_flops = 0;
  double powermlp_flops = 0;

  double time_ratio() const { return powermlp.mean() / mlp.mean(); }
  double flops_ratio() const { return kan_flops / powermlp_flops; }
};

/// Time MLP and PowerMLP training on one suite entry; KAN cost comes from
/// the FLOPs formulas.
inline SuiteResult run_suite_entry(const SuiteEntry& e, std::size_t samples, std::size_t repeats,
                                   std::uint64_t seed, double lambda = kDefaultBasisCost) {
  const Dataset d = random_dataset(samples, e.mlp.dims.front(), e.mlp.dims.back(), seed);
  TrainConfig cfg;
  cfg.epochs = e.epochs;
  cfg.lr = 1e-3;
  cfg.seed = seed;
  const auto res = timing_bench({build_network(e.mlp, seed), build_network(e.powermlp, seed)}, d, cfg, repeats);
  SuiteResult out;
  out.task = e.task;
  out.mlp = res[0];
  out.powermlp = res[1];
  out.kan_flops = flops_network(e.kan.kind, e.kan.dims, e.kan.k, e.kan.grid_count).at(lambda);
  out.powermlp_flops = flops_network(e.powermlp.kind, e.powermlp.dims, e.powermlp.k, 0, e.powermlp.basis).at(lambda);
  return out;
}

}  // namespace powerkan
