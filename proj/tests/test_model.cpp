#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "conflict/checkpoint.hpp"
#include "conflict/gradcheck.hpp"
#include "conflict/model.hpp"
#include "conflict/training.hpp"

using namespace conflict;

namespace {

constexpr InteractionMode kModes[] = {InteractionMode::kAttention, InteractionMode::kConflict,
                                      InteractionMode::kCombined};

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("conflict_test_model_" + name);
}

}  // namespace

TEST_CASE("pool concatenates masked mean and max", "[model]") {
  const auto fused = Tensor::from_rows({{1, -4}, {3, 2}, {50, 50}});
  const auto p = pool(fused, 2);
  CHECK(p.shape() == Shape{1, 4});
  CHECK(p(0, 0) == 2.0);
  CHECK(p(0, 1) == -1.0);
  CHECK(p(0, 2) == 3.0);
  CHECK(p(0, 3) == 2.0);
}

TEST_CASE("predict picks the larger logit and breaks ties toward 0", "[model]") {
  const auto p = predict(Tensor::from_rows({{0.0, 1.0}}));
  CHECK(p.label == 1);
  CHECK(std::abs(p.probabilities[0] - 0.2689414213699951) < 1e-15);
  CHECK(predict(Tensor::from_rows({{0.5, 0.5}})).label == 0);
  CHECK_THROWS_AS(predict(Tensor::from_rows({{0.0, NAN}})), NumericError);
}

TEST_CASE("taper widths for the tiny configurations", "[model]") {
  auto c = tiny_gradcheck_config(InteractionMode::kAttention);
  CHECK(c.classifier_input_width() == 40);
  CHECK(c.fc_widths() == std::vector<std::size_t>{22, 12, 7, 4});
  c.mode = InteractionMode::kCombined;
  CHECK(c.classifier_input_width() == 60);
  CHECK(c.fc_widths() == std::vector<std::size_t>{30, 15, 8, 4});
}

TEST_CASE("parameter counts match hand tallies", "[model]") {
  // embedding 20·4, GRU layers 150 + 165, interaction heads, then the taper.
  const std::size_t attention = 80 + 150 + 165 + 50 + (40 * 22 + 22) + (22 * 12 + 12) + (12 * 7 + 7) + (7 * 4 + 4) + 10;
  const std::size_t conflict = 80 + 150 + 165 + 55 + (40 * 22 + 22) + (22 * 12 + 12) + (12 * 7 + 7) + (7 * 4 + 4) + 10;
  const std::size_t combined = 80 + 150 + 165 + 105 + (60 * 30 + 30) + (30 * 15 + 15) + (15 * 8 + 8) + (8 * 4 + 4) + 10;
  const std::size_t expected[] = {attention, conflict, combined};
  for (std::size_t k = 0; k < 3; ++k) {
    const auto c = tiny_gradcheck_config(kModes[k]);
    CHECK(PairClassifier::init(c, 1).parameter_count() == expected[k]);
    CHECK(closed_form_parameter_count(c) == expected[k]);
  }
}

TEST_CASE("parameter count follows the closed form across configurations", "[model][property]") {
  for (std::size_t e : {3, 8}) {
    for (std::size_t h : {2, 7}) {
      for (auto mode : kModes) {
        for (bool bidir : {false, true}) {
          ModelConfig c;
          c.vocab_size = 11;
          c.embed_dim = e;
          c.hidden_dim = h;
          c.mode = mode;
          c.bidirectional_pair = bidir;
          c.fc_layers = 1 + h % 4;
          CHECK(PairClassifier::init(c, 3).parameter_count() == closed_form_parameter_count(c));
        }
      }
    }
  }
}

TEST_CASE("configuration errors", "[model]") {
  ModelConfig c;
  CHECK_THROWS_AS(PairClassifier::init(c, 1), ConfigError);  // vocab unset
  c.vocab_size = 10;
  c.dropout = 1.0;
  CHECK_THROWS_AS(PairClassifier::init(c, 1), ConfigError);
}

TEST_CASE("forward produces two finite logits in every mode", "[model]") {
  const std::vector<TokenId> q1 = {3, 4, 5, 0}, q2 = {6, 7};
  for (auto mode : kModes) {
    const auto model = PairClassifier::init(tiny_gradcheck_config(mode), 2);
    const auto out = forward_pair_detailed(q1, q2, model, false);
    CHECK(out.logits.shape() == Shape{1, 2});
    CHECK(std::isfinite(out.logits[0]));
    CHECK(out.forward_direction.fused.shape()[0] == 4);
    REQUIRE(out.reverse_direction.has_value());
    CHECK(out.reverse_direction->fused.shape()[0] == 2);
  }
  const auto model = PairClassifier::init(tiny_gradcheck_config(InteractionMode::kCombined), 2);
  CHECK_THROWS_AS(forward_pair(std::vector<TokenId>{0}, q2, model, false), DataError);
}

TEST_CASE("both directions share one encoder and one interaction", "[model][property]") {
  const auto model = PairClassifier::init(tiny_gradcheck_config(InteractionMode::kCombined), 5);
  const std::vector<TokenId> a = {2, 9, 4}, b = {11, 3, 3, 8};
  const auto ab = forward_pair_detailed(a, b, model, false);
  const auto ba = forward_pair_detailed(b, a, model, false);
  const auto& x = ab.forward_direction.fused;
  const auto& y = ba.reverse_direction->fused;
  REQUIRE(x.shape() == y.shape());
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(x[i] == y[i]);
}

TEST_CASE("identical seeds give identical models and logits", "[model][property]") {
  const std::vector<TokenId> q1 = {1, 2, 3}, q2 = {4, 5};
  const auto c = tiny_gradcheck_config(InteractionMode::kCombined);
  const auto m1 = PairClassifier::init(c, 77), m2 = PairClassifier::init(c, 77);
  CHECK(forward_pair(q1, q2, m1, false)[0] == forward_pair(q1, q2, m2, false)[0]);
  CHECK(forward_pair(q1, q2, m1, false)[0] != forward_pair(q1, q2, PairClassifier::init(c, 78), false)[0]);
}

TEST_CASE("end-to-end gradients agree with finite differences", "[model][gradcheck]") {
  for (auto mode : kModes) {
    const auto r = run_model_gradient_check(mode);
    INFO(r.name << " worst " << r.worst_parameter);
    CHECK(r.max_relative_error < 1e-3);
  }
}

TEST_CASE("every parameter tensor receives gradient", "[model]") {
  for (auto mode : kModes) {
    const auto model = PairClassifier::init(tiny_gradcheck_config(mode), 6);
    const std::vector<TokenId> q1 = {3, 7, 12}, q2 = {4, 7, 9};
    const std::size_t label[] = {1};
    backward(cross_entropy_logits(forward_pair(q1, q2, model, false), label));
    for (const auto& p : model.parameters()) {
      double norm = 0.0;
      for (double g : p.tensor.grad()) norm += g * g;
      INFO(to_string(mode) << " " << p.name);
      CHECK(norm > 0.0);
    }
  }
}

TEST_CASE("a single example can be memorised", "[model]") {
  auto model = PairClassifier::init(tiny_gradcheck_config(InteractionMode::kCombined), 4);
  const std::vector<TokenId> q1 = {3, 7, 12}, q2 = {4, 7, 9};
  const std::size_t label[] = {1};
  TrainConfig tc;
  tc.lr = 1e-2;
  const auto params = model.parameters();
  auto state = AdamState::for_parameters(params);
  double loss = 1.0;
  std::size_t step = 0;
  for (; step < 500 && loss >= 0.01; ++step) {
    const auto l = cross_entropy_logits(forward_pair(q1, q2, model, false), label);
    loss = l.item();
    backward(l);
    adam_step(params, state, tc);
    zero_grad(params);
  }
  INFO("steps " << step << " loss " << loss);
  CHECK(loss < 0.01);
}

TEST_CASE("checkpoints round-trip bit for bit", "[model][checkpoint]") {
  auto c = tiny_gradcheck_config(InteractionMode::kConflict);
  c.bidirectional_pair = false;
  c.dropout = 0.35;
  const auto model = PairClassifier::init(c, 9);
  const auto path = temp_file("roundtrip.ckpt");
  save_checkpoint(path, model, {{"note", "hello"}});
  const auto loaded = load_checkpoint(path);
  CHECK(loaded.header.at("note") == "hello");
  CHECK(loaded.model.config.mode == c.mode);
  CHECK(loaded.model.config.dropout == c.dropout);
  CHECK_FALSE(loaded.model.config.bidirectional_pair);
  const auto a = model.parameters(), b = loaded.model.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(a[k].name == b[k].name);
    for (std::size_t i = 0; i < a[k].tensor.size(); ++i) REQUIRE(a[k].tensor[i] == b[k].tensor[i]);
  }
  std::filesystem::remove(path);
}

TEST_CASE("damaged checkpoints are rejected", "[model][checkpoint]") {
  const auto path = temp_file("bad.ckpt");
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
  {
    std::ofstream out(path);
    out << "not a checkpoint\n";
  }
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  save_checkpoint(path, PairClassifier::init(tiny_gradcheck_config(InteractionMode::kAttention), 1));
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 16);
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  std::filesystem::remove(path);
}
