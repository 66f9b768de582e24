// powerkan command-line tool.
//
// Exit codes: 0 ok, 2 verification failed, 3 input error, 4 numeric failure.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "powerkan/convert.hpp"
#include "powerkan/csv.hpp"
#include "powerkan/flops.hpp"
#include "powerkan/model_spec.hpp"
#include "powerkan/serialize.hpp"
#include "powerkan/suite.hpp"
#include "powerkan/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace powerkan;

namespace {

constexpr int kExitVerifyFail = 2;
constexpr int kExitInput = 3;
constexpr int kExitNumeric = 4;

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << text;
}

/// Run record written next to the outputs; temp file + rename.
struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  json config = json::object();
  std::uint64_t seed = 0;
  std::vector<std::string> outputs;
  std::string started = timestamp();

  Manifest(std::string cmd, std::vector<std::string> args) : command(std::move(cmd)), argv(std::move(args)) {}

  void write(const fs::path& path) const {
    json doc{{"format_version", 1},     {"command", command}, {"argv", argv},
             {"config", config},        {"seed", seed},       {"version", POWERKAN_VERSION},
             {"outputs", outputs},      {"started", started}, {"finished", timestamp()}};
    fs::path tmp = path;
    tmp += ".tmp";
    write_text(tmp, doc.dump(2) + "\n");
    fs::rename(tmp, path);
  }
};

fs::path manifest_for(const fs::path& output) {
  fs::path p = output;
  p.replace_extension(".manifest.json");
  return p;
}

/// A model argument is a JSON file path or a shorthand spec such as powermlp:[2,4,1]:k=3.
Network load_model_arg(const std::string& arg, std::uint64_t seed) {
  if (fs::exists(arg)) return load_network(arg);
  if (arg.find('[') == std::string::npos) throw InputError("model '" + arg + "': no such file and not a model spec");
  return build_network(parse_model_spec(arg), seed);
}

std::string curve_svg(const FitResult& r) {
  const double w = 640, h = 400, pad = 50;
  double tmax = 0, lmin = 1e300, lmax = -1e300;
  for (const auto& e : r.curve) {
    tmax = std::max(tmax, e.seconds);
    if (e.train_rmse > 0) {
      lmin = std::min(lmin, std::log10(e.train_rmse));
      lmax = std::max(lmax, std::log10(e.train_rmse));
    }
  }
  if (tmax <= 0) tmax = 1;
  if (!(lmax > lmin)) {
    lmin -= 1;
    lmax += 1;
  }
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << pad << "\" y1=\"" << h - pad << "\" x2=\"" << w - pad << "\" y2=\"" << h - pad
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << pad << "\" y1=\"" << pad << "\" x2=\"" << pad << "\" y2=\"" << h - pad
     << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << w / 2 << "\" y=\"" << h - 10 << "\" text-anchor=\"middle\">seconds (0 - " << tmax
     << ")</text>\n";
  os << "<text x=\"12\" y=\"" << h / 2 << "\" transform=\"rotate(-90 12 " << h / 2
     << ")\" text-anchor=\"middle\">log10 train RMSE</text>\n";
  os << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"";
  for (const auto& e : r.curve) {
    if (e.train_rmse <= 0) continue;
    const double x = pad + (w - 2 * pad) * e.seconds / tmax;
    const double y = h - pad - (h - 2 * pad) * (std::log10(e.train_rmse) - lmin) / (lmax - lmin);
    os << x << "," << y << " ";
  }
  os << "\"/>\n</svg>\n";
  return os.str();
}

json report_json(const EquivalenceReport& r) {
  return json{{"samples", r.samples},     {"max_abs_deviation", r.max_abs_deviation},
              {"argmax", r.argmax},       {"max_abs_output", r.max_abs_output},
              {"tolerance", r.tolerance}, {"scaled", r.scaled},
              {"passed", r.passed}};
}

Rational parse_lambda(const std::string& s) {
  const auto slash = s.find('/');
  try {
    if (slash != std::string::npos) {
      return Rational(std::stoll(s.substr(0, slash)), std::stoll(s.substr(slash + 1)));
    }
    const auto dot = s.find('.');
    if (dot == std::string::npos) return Rational(std::stoll(s));
    const std::string frac = s.substr(dot + 1);
    std::int64_t den = 1;
    for (std::size_t i = 0; i < frac.size(); ++i) den *= 10;
    const std::int64_t whole = std::stoll(s.substr(0, dot).empty() ? "0" : s.substr(0, dot));
    const std::int64_t part = frac.empty() ? 0 : std::stoll(frac);
    return Rational(whole * den + (s.front() == '-' ? -part : part), den);
  } catch (const std::exception&) {
    throw InputError("--lambda: '" + s + "' is not a number");
  }
}

// ---------------------------------------------------------------------------

struct GenDataArgs {
  std::string fn;
  std::size_t n = 2000;
  std::uint64_t seed = 0;
  std::string out;
  double box = 1.0;
};

int cmd_gen_data(const GenDataArgs& a, const std::vector<std::string>& argv) {
  const Dataset d = gen_function_dataset(a.fn, a.n, 0, a.seed, BoxDomain::symmetric(2, a.box));
  const fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  csv::write_file(a.out, csv::from_xy(d.x_train, d.y_train));
  Manifest m{"gen-data", argv};
  m.config = {{"fn", a.fn}, {"n", a.n}, {"box", a.box}};
  m.seed = a.seed;
  m.outputs = {a.out};
  m.write(manifest_for(out));
  std::cout << "wrote " << a.n << " rows to " << a.out << "\n";
  return 0;
}

struct FitArgs {
  std::string model;
  std::string data;
  std::size_t epochs = 1000;
  double lr = 1e-3;
  bool lr_grid = false;
  std::vector<double> lr_list;
  std::uint64_t seed = 0;
  std::string out_dir;
  double test_fraction = 0.5;
  std::size_t batch_size = 0;
  bool svg = false;
};

int cmd_fit(const FitArgs& a, const std::vector<std::string>& argv) {
  const auto table = csv::read_file(a.data);
  const auto [x, y] = csv::to_xy(table);
  const Dataset data = split_dataset(x, y, a.test_fraction, a.data);
  const Network proto = load_model_arg(a.model, a.seed);
  if (proto.input_dim != data.input_dim() || proto.output_dim() != data.y_train.cols()) {
    throw InputError("fit: model is " + std::to_string(proto.input_dim) + " -> " + std::to_string(proto.output_dim()) +
                     ", data is " + std::to_string(data.input_dim()) + " -> " + std::to_string(data.y_train.cols()));
  }
  TrainConfig cfg;
  cfg.epochs = a.epochs;
  cfg.lr = a.lr;
  cfg.seed = a.seed;
  cfg.batch_size = a.batch_size;
  cfg.validate();

  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  Manifest m{"fit", argv};
  m.seed = a.seed;
  m.config = {{"model", a.model},
              {"data", a.data},
              {"epochs", cfg.epochs},
              {"batch_size", cfg.batch_size},
              {"warmup_fraction", cfg.warmup_fraction},
              {"beta1", cfg.beta1},
              {"beta2", cfg.beta2},
              {"eps", cfg.eps},
              {"test_fraction", a.test_fraction}};

  FitResult result;
  Network trained = proto;
  csv::Table grid_table{{"lr", "test_rmse", "diverged"}, {}};
  if (a.lr_grid || !a.lr_list.empty()) {
    const std::vector<double> lrs = a.lr_list.empty() ? default_lr_grid() : a.lr_list;
    m.config["lr_grid"] = lrs;
    auto res = grid_search([&proto] { return proto; }, data, lrs, cfg);
    result = std::move(res.best);
    trained = std::move(res.best_net);
    for (const auto& o : res.outcomes) grid_table.rows.push_back({o.lr, o.test_rmse, o.diverged ? 1.0 : 0.0});
  } else {
    m.config["lr"] = cfg.lr;
    result = train(trained, data, cfg);
  }

  const fs::path model_path = dir / "model.json";
  save_network(trained, model_path.string());
  csv::Table results{{"lr", "train_rmse", "test_rmse", "seconds", "epochs_run", "diverged"},
                     {{result.best_lr, result.train_rmse, result.test_rmse, result.seconds,
                       static_cast<double>(result.curve.size()), result.diverged ? 1.0 : 0.0}}};
  csv::write_file((dir / "results.csv").string(), results);
  csv::Table curve{{"epoch", "train_rmse", "test_rmse", "seconds"}, {}};
  for (const auto& e : result.curve) {
    curve.rows.push_back({static_cast<double>(e.epoch), e.train_rmse, e.test_rmse, e.seconds});
  }
  csv::write_file((dir / "curve.csv").string(), curve);
  m.outputs = {model_path.string(), (dir / "results.csv").string(), (dir / "curve.csv").string()};
  if (!grid_table.rows.empty()) {
    csv::write_file((dir / "grid.csv").string(), grid_table);
    m.outputs.push_back((dir / "grid.csv").string());
  }
  if (a.svg) {
    write_text(dir / "curve.svg", curve_svg(result));
    m.outputs.push_back((dir / "curve.svg").string());
  }
  m.write(dir / "manifest.json");
  std::cout << "lr " << result.best_lr << "  train_rmse " << result.train_rmse << "  test_rmse "
            << result.test_rmse << "  seconds " << result.seconds << (result.diverged ? "  (diverged)" : "") << "\n";
  return result.diverged ? kExitNumeric : 0;
}

struct ConvertArgs {
  std::string in;
  std::string to;
  double box = 1.0;
  bool compact_width = false;
  std::string out;
};

int cmd_convert(const ConvertArgs& a, const std::vector<std::string>& argv) {
  const Network src = load_network(a.in);
  Network dst;
  if (a.to == "powermlp") {
    dst = kan_to_powermlp(src, {a.compact_width});
  } else if (a.to == "kan") {
    dst = powermlp_to_kan(src, BoxDomain::symmetric(src.input_dim, a.box));
  } else {
    throw InputError("--to: expected kan or powermlp, got '" + a.to + "'");
  }
  save_network(dst, a.out);
  Manifest m{"convert", argv};
  m.seed = src.seed;
  m.config = {{"in", a.in}, {"to", a.to}, {"box", a.box}, {"compact_width", a.compact_width}};
  m.outputs = {a.out};
  m.write(manifest_for(a.out));
  std::cout << "wrote " << to_string(dst.kind) << " with " << dst.layers.size() << " layers, "
            << parameter_count(dst) << " parameters to " << a.out << "\n";
  return 0;
}

struct VerifyArgs {
  std::string a, b;
  double box = 1.0;
  std::size_t samples = 10000;
  double tol = 1e-8;
  bool scaled = false;
  std::string out;
};

int cmd_verify(const VerifyArgs& a, const std::vector<std::string>& argv) {
  const Network na = load_network(a.a), nb = load_network(a.b);
  VerifyOptions opt;
  opt.scale_by_output = a.scaled;
  const auto rep = verify_equivalence(na, nb, BoxDomain::symmetric(na.input_dim, a.box), a.samples, a.tol, opt);
  const json doc = report_json(rep);
  std::cout << doc.dump(2) << "\n";
  if (!a.out.empty()) {
    write_text(a.out, doc.dump(2) + "\n");
    Manifest m{"verify", argv};
    m.config = {{"a", a.a}, {"b", a.b}, {"box", a.box}, {"samples", a.samples}, {"tol", a.tol}, {"scaled", a.scaled}};
    m.outputs = {a.out};
    m.write(manifest_for(a.out));
  }
  return rep.passed ? 0 : kExitVerifyFail;
}

struct FlopsArgs {
  std::string model;
  std::string lambda = "5";
  std::string out;
};

int cmd_flops(const FlopsArgs& a, const std::vector<std::string>& argv) {
  const Network net = load_model_arg(a.model, 0);
  CostReport rep = cost_report(net, parse_lambda(a.lambda));
  int g = 0;
  if (!net.layers.empty()) {
    if (const auto* kan = std::get_if<KanLayer>(&net.layers.front())) g = kan->grid.grid_count();
  }
  if (auto note = reference_note(net.kind, net.dims(), net.kind == NetworkKind::kMlp ? 0 : net.k, g)) {
    rep.notes.push_back(*note);
  }
  std::cout << render_table(rep);
  const std::string csv_text = render_csv(rep);
  if (a.out.empty()) {
    std::cout << "\n" << csv_text;
  } else {
    write_text(a.out, csv_text);
    Manifest m{"flops", argv};
    m.config = {{"model", a.model}, {"lambda", a.lambda}};
    m.outputs = {a.out};
    m.write(manifest_for(a.out));
  }
  return 0;
}

struct BenchArgs {
  std::string suite = "timing";
  std::size_t repeats = 3;
  std::size_t samples = 1000;
  std::uint64_t seed = 0;
  std::string out;
  std::vector<std::string> tasks;
};

int cmd_bench(const BenchArgs& a, const std::vector<std::string>& argv) {
  if (a.suite != "timing") throw InputError("--suite: unknown suite '" + a.suite + "'");
  csv::Table table{{"task", "mlp_seconds", "powermlp_seconds", "time_ratio", "kan_flops", "powermlp_flops",
                    "flops_ratio", "repeats", "epochs"},
                   {}};
  std::vector<std::string> names;
  for (const auto& e : timing_suite()) {
    if (!a.tasks.empty() && std::find(a.tasks.begin(), a.tasks.end(), e.task) == a.tasks.end()) continue;
    const SuiteResult r = run_suite_entry(e, a.samples, a.repeats, a.seed);
    names.push_back(e.task);
    table.rows.push_back({r.mlp.mean(), r.powermlp.mean(), r.time_ratio(), r.kan_flops, r.powermlp_flops,
                          r.flops_ratio(), static_cast<double>(a.repeats), static_cast<double>(e.epochs)});
    std::cout << std::left << std::setw(10) << e.task << " mlp " << r.mlp.mean() << " s  powermlp "
              << r.powermlp.mean() << " s  ratio " << r.time_ratio() << "  kan/powermlp flops " << r.flops_ratio()
              << "\n";
  }
  if (table.rows.empty()) throw InputError("--task: no matching suite entries");
  std::ostringstream os;
  os << "#format_version=1\n";
  for (std::size_t i = 0; i < table.header.size(); ++i) os << (i ? "," : "") << table.header[i];
  os << "\n";
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    os << names[r];
    for (double v : table.rows[r]) os << "," << csv::format_double(v);
    os << "\n";
  }
  if (a.out.empty()) {
    std::cout << "\n" << os.str();
  } else {
    write_text(a.out, os.str());
    Manifest m{"bench", argv};
    m.seed = a.seed;
    m.config = {{"suite", a.suite}, {"repeats", a.repeats}, {"samples", a.samples}, {"tasks", names}};
    m.outputs = {a.out};
    m.write(manifest_for(a.out));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"powerkan: KAN / PowerMLP toolkit"};
  app.set_version_flag("--version", POWERKAN_VERSION);
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* g = app.add_subcommand("gen-data", "Generate a function-fitting dataset as CSV");
  g->add_option("--fn", gen.fn, "ablation_xexp | bessel_j0 | ellipk | ellipe")->required();
  g->add_option("--n", gen.n, "number of rows")->check(CLI::PositiveNumber);
  g->add_option("--seed", gen.seed);
  g->add_option("--out", gen.out, "output CSV")->required();
  g->add_option("--box", gen.box, "inputs uniform on [-E, E]^2")->check(CLI::PositiveNumber);

  FitArgs fit;
  auto* f = app.add_subcommand("fit", "Train a model on a CSV dataset");
  f->add_option("--model", fit.model, "model JSON or spec, e.g. powermlp:[2,4,1]:k=3")->required();
  f->add_option("--data", fit.data, "CSV with header x1..xn,y")->required();
  f->add_option("--epochs", fit.epochs)->check(CLI::PositiveNumber);
  auto* lr = f->add_option("--lr", fit.lr)->check(CLI::PositiveNumber);
  auto* grid = f->add_flag("--lr-grid", fit.lr_grid, "grid search over 10 rates in [1e-4, 1e-1]");
  auto* lrs = f->add_option("--lrs", fit.lr_list, "explicit grid-search rates")->delimiter(',');
  lr->excludes(grid)->excludes(lrs);
  f->add_option("--seed", fit.seed);
  f->add_option("--out-dir", fit.out_dir)->required();
  f->add_option("--test-fraction", fit.test_fraction, "trailing rows held out for test")->check(CLI::Range(0.0, 0.99));
  f->add_option("--batch-size", fit.batch_size, "0 for full batch");
  f->add_flag("--svg", fit.svg, "also write curve.svg");

  ConvertArgs conv;
  auto* c = app.add_subcommand("convert", "Convert between KAN and PowerMLP");
  c->add_option("--in", conv.in)->required()->check(CLI::ExistingFile);
  c->add_option("--to", conv.to, "kan | powermlp")->required();
  c->add_option("--box", conv.box, "domain [-E, E]^n for conversion to KAN")->check(CLI::PositiveNumber);
  c->add_flag("--compact-width", conv.compact_width, "G + k units per edge");
  c->add_option("--out", conv.out)->required();

  VerifyArgs ver;
  auto* v = app.add_subcommand("verify", "Compare two models on a box");
  v->add_option("--a", ver.a)->required()->check(CLI::ExistingFile);
  v->add_option("--b", ver.b)->required()->check(CLI::ExistingFile);
  v->add_option("--box", ver.box)->check(CLI::PositiveNumber);
  v->add_option("--samples", ver.samples);
  v->add_option("--tol", ver.tol)->check(CLI::NonNegativeNumber);
  v->add_flag("--scaled", ver.scaled, "tolerance times (1 + max |output|)");
  v->add_option("--out", ver.out, "also write the report here");

  FlopsArgs fl;
  auto* p = app.add_subcommand("flops", "FLOPs and parameter report");
  p->add_option("--model", fl.model, "model JSON or spec")->required();
  p->add_option("--lambda", fl.lambda, "cost of one basis evaluation (integer, decimal or p/q)");
  p->add_option("--out", fl.out, "CSV output");

  BenchArgs be;
  auto* b = app.add_subcommand("bench", "Training-time benchmark");
  b->add_option("--suite", be.suite);
  b->add_option("--repeats", be.repeats)->check(CLI::PositiveNumber);
  b->add_option("--samples", be.samples)->check(CLI::PositiveNumber);
  b->add_option("--seed", be.seed);
  b->add_option("--task", be.tasks, "restrict to tasks (small, titanic, spam, svhn)");
  b->add_option("--out", be.out, "CSV output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (*g) return cmd_gen_data(gen, args);
    if (*f) return cmd_fit(fit, args);
    if (*c) return cmd_convert(conv, args);
    if (*v) return cmd_verify(ver, args);
    if (*p) return cmd_flops(fl, args);
    if (*b) return cmd_bench(be, args);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}
