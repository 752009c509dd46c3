#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "conflict/encoder.hpp"
#include "conflict/vocabulary.hpp"
#include "oracles.hpp"

using namespace conflict;

namespace {

oracle::GruWeights to_oracle(const GruLayerParams& p) {
  auto row = [](const Tensor& t) { return oracle::Vec(t.data().begin(), t.data().end()); };
  return {oracle::to_mat(p.w_z), oracle::to_mat(p.w_r), oracle::to_mat(p.w_h), oracle::to_mat(p.u_z),
          oracle::to_mat(p.u_r), oracle::to_mat(p.u_h), row(p.b_z),           row(p.b_r),
          row(p.b_h)};
}

GruLayerParams random_gru(std::size_t d, std::size_t h, std::mt19937_64& rng) {
  auto p = GruLayerParams::init(d, h, rng);
  std::uniform_real_distribution<double> bias(-0.5, 0.5);
  for (Tensor* b : {&p.b_z, &p.b_r, &p.b_h})
    for (auto& x : b->mutable_data()) x = bias(rng);
  return p;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("conflict_test_encoder_" + name);
}

}  // namespace

TEST_CASE("tokenize lowercases and splits punctuation", "[vocabulary]") {
  CHECK(tokenize("How do I learn French?") ==
        std::vector<std::string>{"how", "do", "i", "learn", "french", "?"});
  CHECK(tokenize("  a\tb\n") == std::vector<std::string>{"a", "b"});
  CHECK(tokenize("").empty());
  CHECK(normalize_text("It's  OK") == "it ' s ok");
}

TEST_CASE("vocabulary keeps frequent tokens in a fixed order", "[vocabulary]") {
  const auto v = Vocabulary::build({{"b", "a", "c"}, {"a", "b", "a"}, {"d"}});
  CHECK(v.tokens() == std::vector<std::string>{"<pad>", "<unk>", "a", "b"});
  CHECK(v.id("a") == 2);
  CHECK(v.id("c") == Vocabulary::kUnk);
  CHECK(v.encode("A b zzz") == std::vector<TokenId>{2, 3, Vocabulary::kUnk});
  CHECK(v.encode("a a a a", 2).size() == 2);
}

TEST_CASE("vocabulary survives a save and load", "[vocabulary]") {
  const auto v = Vocabulary::build({{"x", "y", "x", "y", "z", "z"}});
  const auto path = temp_file("vocab.txt");
  v.save(path);
  CHECK(Vocabulary::load(path).tokens() == v.tokens());
  {
    std::ofstream bad(path);
    bad << "hello\nworld\n";
  }
  CHECK_THROWS_AS(Vocabulary::load(path), FormatError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(Vocabulary::load(path), IoError);
}

TEST_CASE("embedding lookup returns rows and freezes padding", "[encoder]") {
  std::mt19937_64 rng(1);
  auto table = EmbeddingTable::init(6, 3, rng);
  for (std::size_t j = 0; j < 3; ++j) CHECK(table.weights(0, j) == 0.0);
  const std::vector<TokenId> ids = {4, 0, 4};
  const auto e = embed(ids, table);
  CHECK(e(0, 1) == table.weights(4, 1));
  backward(sum(e));
  CHECK(table.weights.grad()[0] == 0.0);
  CHECK(table.weights.grad()[4 * 3] == 2.0);
  const std::vector<TokenId> bad = {6};
  CHECK_THROWS_AS(embed(bad, table), DataError);
}

TEST_CASE("zero parameters keep the zero state fixed", "[encoder]") {
  // With all weights zero: z = 0.5, c = 0, so h' = 0.5·h and h0 = 0 stays 0.
  const auto p = GruLayerParams::zeros(3, 4);
  const auto out = gru_layer(Tensor::full({5, 3}, 0.7), p, 5);
  for (double x : out.data()) CHECK(x == 0.0);
}

TEST_CASE("single GRU step matches the hand-written recurrence", "[encoder]") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_gru(3, 4, rng);
    const auto x = oracle::random_mat(1, 3, rng);
    const auto h0 = oracle::random_mat(1, 4, rng);
    const auto got = gru_layer(oracle::to_tensor(x), p, 1, oracle::to_tensor(h0));
    const oracle::Mat want{oracle::gru_step(x[0], h0[0], to_oracle(p))};
    CHECK(oracle::max_abs_diff(want, got) < 1e-12);
  }
}

TEST_CASE("GRU states stay inside (-1, 1)", "[encoder][property]") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_gru(2, 3, rng);
    const auto out = gru_layer(oracle::to_tensor(oracle::random_mat(12, 2, rng, 5.0)), p, 12);
    for (double x : out.data()) {
      CHECK(x > -1.0);
      CHECK(x < 1.0);
    }
  }
}

TEST_CASE("two-layer encoder matches the loop composition", "[encoder]") {
  std::mt19937_64 rng(12);
  auto table = EmbeddingTable::init(10, 3, rng);
  const auto l1 = random_gru(3, 4, rng), l2 = random_gru(4, 4, rng);
  const std::vector<TokenId> ids = {5, 2, 9, 7, 0, 0};
  const auto enc = encode(ids, table, l1, l2);
  CHECK(enc.length == 4);
  const auto emb = oracle::to_mat(embed(ids, table));
  const auto want = oracle::gru_sequence(oracle::gru_sequence(emb, 4, to_oracle(l1)), 4, to_oracle(l2));
  CHECK(oracle::max_abs_diff(want, enc.states) < 1e-12);
  for (std::size_t t = 4; t < 6; ++t)
    for (std::size_t j = 0; j < 4; ++j) CHECK(enc.states(t, j) == 0.0);
}

TEST_CASE("padding does not change valid states", "[encoder][property]") {
  std::mt19937_64 rng(21);
  auto table = EmbeddingTable::init(12, 3, rng);
  const auto l1 = random_gru(3, 4, rng), l2 = random_gru(4, 4, rng);
  std::uniform_int_distribution<TokenId> tok(1, 11);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<TokenId> ids(1 + trial % 6);
    for (auto& t : ids) t = tok(rng);
    auto padded = ids;
    padded.resize(ids.size() + 1 + trial % 3, Vocabulary::kPad);
    const auto a = encode(ids, table, l1, l2);
    const auto b = encode(padded, table, l1, l2);
    REQUIRE(a.length == b.length);
    for (std::size_t i = 0; i < a.states.size(); ++i) CHECK(a.states[i] == b.states[i]);
  }
}

TEST_CASE("batch encoding is per-sequence", "[encoder][property]") {
  std::mt19937_64 rng(33);
  auto table = EmbeddingTable::init(8, 2, rng);
  const auto l1 = random_gru(2, 3, rng), l2 = random_gru(3, 3, rng);
  const std::vector<std::vector<TokenId>> batch = {{1, 2, 3}, {7, 6}, {4}};
  const std::vector<std::vector<TokenId>> reversed = {batch[2], batch[1], batch[0]};
  const auto a = encode_batch(batch, table, l1, l2);
  const auto b = encode_batch(reversed, table, l1, l2);
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& x = a[k].states;
    const auto& y = b[2 - k].states;
    REQUIRE(x.shape() == y.shape());
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(x[i] == y[i]);
  }
}

TEST_CASE("encoder errors", "[encoder]") {
  std::mt19937_64 rng(2);
  auto table = EmbeddingTable::init(5, 2, rng);
  const auto l1 = GruLayerParams::init(2, 3, rng), l2 = GruLayerParams::init(3, 3, rng);
  const std::vector<TokenId> empty = {0, 0};
  CHECK_THROWS_AS(encode(empty, table, l1, l2), DataError);
  const std::vector<TokenId> out_of_range = {1, 9};
  CHECK_THROWS_AS(encode(out_of_range, table, l1, l2), DataError);
  CHECK_THROWS_AS(gru_layer(Tensor::zeros({2, 5}), l1, 2), DimensionError);
}
