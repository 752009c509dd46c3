#pragma once

// End-to-end run: balance and split records, build the vocabulary from the
// training split, train a classifier and evaluate it on the held-out split.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "conflict/checkpoint.hpp"
#include "conflict/data.hpp"
#include "conflict/model.hpp"
#include "conflict/training.hpp"
#include "conflict/vocabulary.hpp"

namespace conflict {

struct ExperimentConfig {
  ModelConfig model;  // vocab_size is filled in from the training split
  TrainConfig train;
  std::uint64_t split_seed = 0;
  std::uint64_t init_seed = 0;
  std::size_t max_length = 40;
  std::size_t min_frequency = 2;
  std::size_t max_train = 0;  // 0 keeps the whole split
  std::size_t max_test = 0;

  /// Everything needed to rebuild the same split later.
  HeaderFields header_fields() const {
    return {{"split_seed", std::to_string(split_seed)},
            {"init_seed", std::to_string(init_seed)},
            {"train_seed", std::to_string(train.seed)},
            {"max_length", std::to_string(max_length)},
            {"min_frequency", std::to_string(min_frequency)},
            {"max_train", std::to_string(max_train)},
            {"max_test", std::to_string(max_test)}};
  }

  static ExperimentConfig from_header(const HeaderFields& h) {
    auto number = [&h](const std::string& key, std::uint64_t fallback) -> std::uint64_t {
      auto it = h.find(key);
      return it == h.end() ? fallback : std::stoull(it->second);
    };
    ExperimentConfig c;
    c.model = config_from_header(h);
    c.split_seed = number("split_seed", 0);
    c.init_seed = number("init_seed", 0);
    c.train.seed = number("train_seed", 0);
    c.max_length = number("max_length", 40);
    c.min_frequency = number("min_frequency", 2);
    c.max_train = number("max_train", 0);
    c.max_test = number("max_test", 0);
    return c;
  }
};

struct PreparedData {
  DatasetSplit split;  // after the max_train / max_test caps
  Vocabulary vocab;
  std::vector<EncodedPair> train;
  std::vector<EncodedPair> test;
};

inline PreparedData prepare_data(const std::vector<SequencePairRecord>& records, const ExperimentConfig& config,
                                 const Vocabulary* existing_vocab = nullptr) {
  PreparedData d;
  d.split = balance_and_split(records, config.split_seed);
  if (config.max_train != 0 && d.split.train.size() > config.max_train) d.split.train.resize(config.max_train);
  if (config.max_test != 0 && d.split.test.size() > config.max_test) d.split.test.resize(config.max_test);
  d.vocab = existing_vocab ? *existing_vocab
                           : Vocabulary::build(tokenized_texts(d.split.train), config.min_frequency);
  d.train = encode_records(d.split.train, d.vocab, config.max_length);
  d.test = encode_records(d.split.test, d.vocab, config.max_length);
  return d;
}

struct ExperimentResult {
  PairClassifier model;
  Vocabulary vocab;
  MetricsLog log;
  EvalResult test;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
};

inline ExperimentResult run_experiment(const std::vector<SequencePairRecord>& records, ExperimentConfig config,
                                       const StepCallback& on_step = {}) {
  PreparedData data = prepare_data(records, config);
  config.model.vocab_size = data.vocab.size();
  ExperimentResult r;
  r.model = PairClassifier::init(config.model, config.init_seed);
  r.vocab = std::move(data.vocab);
  r.log = train(r.model, data.train, config.train, on_step);
  r.test = evaluate(r.model, data.test);
  r.log.evals.push_back({"test", r.test.accuracy, r.test.cross_entropy});
  r.train_size = data.train.size();
  r.test_size = data.test.size();
  return r;
}

}  // namespace conflict
