#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "powerkan/csv.hpp"
#include "powerkan/model_spec.hpp"
#include "powerkan/serialize.hpp"

using namespace powerkan;

namespace {

void perturb(Network& net, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (auto* p : network_parameters(net)) {
    for (double& v : p->data()) v += d(rng) / 3.0;
  }
}

std::string error_of(const nlohmann::json& doc) {
  try {
    network_from_json(doc);
  } catch (const InputError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(ModelJson, RoundTripIsBitExact) {
  std::vector<Network> nets{make_kan({2, 3, 1}, 3, 5, 1), make_powermlp({2, 4, 4, 1}, 3, 2),
                            make_powermlp({3, 2, 1}, 2, 3, false), make_mlp({2, 6, 1}, 4)};
  for (auto& net : nets) {
    perturb(net, 99);
    net.name = "round trip";
    const std::string text = network_to_json(net).dump();
    const Network back = network_from_json(nlohmann::json::parse(text));
    EXPECT_EQ(back.kind, net.kind);
    EXPECT_EQ(back.k, net.k);
    EXPECT_EQ(back.seed, net.seed);
    EXPECT_EQ(back.name, net.name);
    EXPECT_EQ(back.dims(), net.dims());
    const auto pa = network_parameters(net);
    const auto pb = network_parameters(const_cast<Network&>(back));
    ASSERT_EQ(pa.size(), pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(*pa[i], *pb[i]);
  }
}

TEST(ModelJson, BetaAndKnotsSurvive) {
  const Network pm = make_powermlp({2, 3, 1}, 2, 1);
  Network with_beta = pm;
  auto& l = std::get<PowerMlpLayer>(with_beta.layers[0]);
  l.beta = Tensor(2, 3, 0.1 + 1.0 / 3.0);
  l.alpha = Tensor(2, 2, -0.7);
  std::get<PowerMlpLayer>(with_beta.layers[1]).omega = Tensor(1, 2, 1.0);
  const Network back = network_from_json(network_to_json(with_beta));
  EXPECT_EQ(std::get<PowerMlpLayer>(back.layers[0]).beta, l.beta);

  Network kan = make_kan({1, 1}, 3, 4, 5);
  std::get<KanLayer>(kan.layers[0]).grid = KnotGrid(3, 4, {-2.0, -1.3, -0.7, -0.2, 0.1, 0.45, 0.9, 1.4, 2.1, 2.5, 3.2});
  const Network kb = network_from_json(network_to_json(kan));
  EXPECT_TRUE(std::get<KanLayer>(kb.layers[0]).grid == std::get<KanLayer>(kan.layers[0]).grid);
}

TEST(ModelJson, DocumentShape) {
  const auto doc = network_to_json(make_kan({2, 1}, 2, 3, 7));
  EXPECT_EQ(doc.at("format_version"), 1);
  EXPECT_EQ(doc.at("kind"), "kan");
  EXPECT_EQ(doc.at("k"), 2);
  EXPECT_EQ(doc.at("seed"), 7);
  EXPECT_TRUE(doc.at("layers").is_array());
}

TEST(ModelJson, RejectsUnknownVersionAndBadFields) {
  auto doc = network_to_json(make_powermlp({2, 4, 1}, 3, 1));
  auto v2 = doc;
  v2["format_version"] = 2;
  EXPECT_NE(error_of(v2).find("format_version"), std::string::npos);

  auto missing = doc;
  missing["layers"][0].erase("omega");
  EXPECT_NE(error_of(missing).find("omega"), std::string::npos);

  auto short_arr = doc;
  short_arr["layers"][0]["gamma"] = nlohmann::json::array({1.0});
  EXPECT_NE(error_of(short_arr).find("gamma"), std::string::npos);

  auto bad_kind = doc;
  bad_kind["kind"] = "cnn";
  EXPECT_FALSE(error_of(bad_kind).empty());
}

TEST(ModelJson, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "powerkan_model_rt.json";
  Network net = make_kan({2, 2, 1}, 3, 3, 8);
  perturb(net, 5);
  save_network(net, path.string());
  const Network back = load_network(path.string());
  EXPECT_EQ(std::get<KanLayer>(back.layers[1]).coeffs, std::get<KanLayer>(net.layers[1]).coeffs);
  std::filesystem::remove(path);
  EXPECT_THROW(load_network(path.string()), InputError);
}

TEST(Csv, RoundTripIsExact) {
  Tensor x(3, 2, {0.1, -1.0 / 3.0, 1e-300, 2.5, -0.0, 123456789.125});
  Tensor y(3, 1, {std::sqrt(2.0), -7.0, 1.0 / 7.0});
  std::stringstream ss;
  csv::write(ss, csv::from_xy(x, y));
  EXPECT_EQ(ss.str().rfind("#format_version=1\nx1,x2,y\n", 0), 0u);
  const auto [bx, by] = csv::to_xy(csv::read(ss));
  EXPECT_EQ(bx, x);
  EXPECT_EQ(by, y);
}

TEST(Csv, AcceptsUnversionedAndRejectsUnknownVersion) {
  std::stringstream plain("x1,y\n1,2\n3,4\n");
  EXPECT_EQ(csv::read(plain).rows.size(), 2u);
  std::stringstream v9("#format_version=9\nx1,y\n1,2\n");
  EXPECT_THROW(csv::read(v9), InputError);
}

TEST(Csv, ErrorsNameLineAndColumn) {
  std::stringstream bad("x1,x2,y\n1,2,3\n4,oops,6\n");
  try {
    csv::read(bad, "data.csv");
    FAIL();
  } catch (const InputError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 3"), std::string::npos);
    EXPECT_NE(msg.find("x2"), std::string::npos);
  }
  std::stringstream ragged("x1,y\n1,2,3\n");
  EXPECT_THROW(csv::read(ragged), InputError);
  std::stringstream empty("");
  EXPECT_THROW(csv::read(empty), InputError);
}
