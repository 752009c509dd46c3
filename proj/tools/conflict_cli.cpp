// Command-line front end: train, eval, heatmap, floor-demo, gradcheck, gen-synthetic.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "conflict/conflict.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kSeedEnv = "CONFLICT_SEED";

std::uint64_t default_seed() {
  if (const char* env = std::getenv(kSeedEnv)) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw conflict::ConfigError(std::string(kSeedEnv) + " is not an unsigned integer: " + env);
    }
  }
  return 1;
}

template <typename T>
void read_key(const json& j, const char* key, T& target) {
  if (j.contains(key)) target = j.at(key).get<T>();
}

conflict::ExperimentConfig load_experiment_config(const std::string& path, bool& seed_set) {
  conflict::ExperimentConfig c;
  seed_set = false;
  if (path.empty()) return c;
  std::ifstream in(path);
  if (!in) throw conflict::IoError("cannot read config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw conflict::FormatError("config " + path + ": " + e.what());
  }
  try {
    read_key(j, "embed_dim", c.model.embed_dim);
    read_key(j, "hidden_dim", c.model.hidden_dim);
    read_key(j, "fc_layers", c.model.fc_layers);
    read_key(j, "dropout", c.model.dropout);
    read_key(j, "bidirectional_pair", c.model.bidirectional_pair);
    if (j.contains("mode")) c.model.mode = conflict::parse_interaction_mode(j.at("mode").get<std::string>());
    read_key(j, "epochs", c.train.epochs);
    read_key(j, "batch_size", c.train.batch_size);
    read_key(j, "lr", c.train.lr);
    read_key(j, "adam_beta1", c.train.adam_beta1);
    read_key(j, "adam_beta2", c.train.adam_beta2);
    read_key(j, "adam_eps", c.train.adam_eps);
    read_key(j, "smoothing_window", c.train.smoothing_window);
    read_key(j, "clip_norm", c.train.clip_norm);
    read_key(j, "max_length", c.max_length);
    read_key(j, "min_frequency", c.min_frequency);
    read_key(j, "max_train", c.max_train);
    read_key(j, "max_test", c.max_test);
    if (j.contains("seed")) {
      const auto s = j.at("seed").get<std::uint64_t>();
      c.split_seed = c.init_seed = c.train.seed = s;
      seed_set = true;
    }
  } catch (const json::exception& e) {
    throw conflict::ConfigError("config " + path + ": " + e.what());
  }
  return c;
}

fs::path sibling_vocab(const std::string& checkpoint, const std::string& vocab) {
  return vocab.empty() ? fs::path(checkpoint).parent_path() / "vocab.txt" : fs::path(vocab);
}

std::vector<std::string> truncated_tokens(const std::string& text, std::size_t max_length) {
  auto toks = conflict::tokenize(text);
  if (max_length != 0 && toks.size() > max_length) toks.resize(max_length);
  if (toks.empty()) throw conflict::DataError("question is empty after normalisation");
  return toks;
}

std::vector<conflict::TokenId> to_ids(const std::vector<std::string>& toks, const conflict::Vocabulary& vocab) {
  std::vector<conflict::TokenId> ids;
  for (const auto& t : toks) ids.push_back(vocab.id(t));
  return ids;
}

std::string eval_csv(const std::string& split, const conflict::EvalResult& r) {
  conflict::MetricsLog log;
  log.evals.push_back({split, r.accuracy, r.cross_entropy});
  return log.evals_csv();
}

int run_train(const std::string& data, const std::string& mode, const std::string& config_path,
              const std::string& out, std::optional<std::uint64_t> seed_flag) {
  bool seed_in_config = false;
  auto config = load_experiment_config(config_path, seed_in_config);
  if (!mode.empty()) config.model.mode = conflict::parse_interaction_mode(mode);
  if (seed_flag || !seed_in_config) {
    const auto s = seed_flag.value_or(default_seed());
    config.split_seed = config.init_seed = config.train.seed = s;
  }
  const auto loaded = conflict::load_quora_tsv(data);
  std::cout << "loaded " << loaded.records.size() << " records (" << loaded.skipped << " malformed rows skipped)\n";

  fs::create_directories(out);
  auto result = conflict::run_experiment(loaded.records, config, [](std::size_t step, double loss) {
    if (step % 50 == 0) std::cout << "step " << step << " loss " << loss << '\n' << std::flush;
  });
  config.model.vocab_size = result.vocab.size();

  const fs::path dir(out);
  conflict::save_checkpoint(dir / "model.ckpt", result.model, config.header_fields());
  result.vocab.save(dir / "vocab.txt");
  result.log.write(dir / "train_loss.csv", dir / "eval.csv");
  conflict::MetricsLog smoothed;
  const auto losses = result.log.losses();
  const auto curve = conflict::smooth_curve(losses, config.train.smoothing_window);
  for (std::size_t i = 0; i < curve.size(); ++i) smoothed.steps.push_back({i + 1, curve[i]});
  std::ofstream(dir / "train_loss_smoothed.csv") << smoothed.steps_csv();

  std::cout << "mode " << conflict::to_string(config.model.mode) << ", " << result.train_size << " train / "
            << result.test_size << " test pairs, vocabulary " << result.vocab.size() << ", "
            << result.model.parameter_count() << " parameters\n";
  std::cout << result.log.evals_csv();
  return 0;
}

int run_eval(const std::string& checkpoint, const std::string& data, const std::string& vocab_path,
             const std::string& split) {
  auto loaded_ckpt = conflict::load_checkpoint(checkpoint);
  const auto vocab = conflict::Vocabulary::load(sibling_vocab(checkpoint, vocab_path));
  const auto config = conflict::ExperimentConfig::from_header(loaded_ckpt.header);
  const auto records = conflict::load_quora_tsv(data).records;
  conflict::EvalResult r;
  if (split == "all") {
    r = conflict::evaluate(loaded_ckpt.model, conflict::encode_records(records, vocab, config.max_length));
  } else {
    const auto prepared = conflict::prepare_data(records, config, &vocab);
    r = conflict::evaluate(loaded_ckpt.model, split == "train" ? prepared.train : prepared.test);
  }
  std::cout << eval_csv(split, r);
  return 0;
}

int run_heatmap(const std::string& checkpoint, const std::string& vocab_path, const std::string& q1,
                const std::string& q2, const std::string& out) {
  auto loaded = conflict::load_checkpoint(checkpoint);
  const auto vocab = conflict::Vocabulary::load(sibling_vocab(checkpoint, vocab_path));
  const auto config = conflict::ExperimentConfig::from_header(loaded.header);
  const auto tokens_u = truncated_tokens(q1, config.max_length);
  const auto tokens_v = truncated_tokens(q2, config.max_length);
  conflict::NoGradGuard no_grad;
  const auto fwd = conflict::forward_pair_detailed(to_ids(tokens_u, vocab), to_ids(tokens_v, vocab), loaded.model, false);
  const auto& dir = fwd.forward_direction;
  if (dir.attention_weights) {
    const std::string path = out + ".attention.csv";
    conflict::export_heatmap(*dir.attention_weights, tokens_u, tokens_v, path);
    std::cout << "wrote " << path << '\n';
  }
  if (dir.conflict_weights) {
    const std::string path = out + ".conflict.csv";
    conflict::export_heatmap(*dir.conflict_weights, tokens_u, tokens_v, path);
    std::cout << "wrote " << path << '\n';
  }
  const auto pred = conflict::predict(fwd.logits);
  std::cout << "prediction " << pred.label << " (p_duplicate=" << pred.probabilities[1] << ")\n";
  return 0;
}

int run_floor_demo(const std::string& q1, const std::string& q2, const std::string& checkpoint,
                   const std::string& vocab_path, std::uint64_t seed) {
  const auto tokens_u = truncated_tokens(q1, 0);
  const auto tokens_v = truncated_tokens(q2, 0);
  std::optional<conflict::LoadedCheckpoint> loaded;
  conflict::Vocabulary vocab;
  if (!checkpoint.empty()) {
    loaded = conflict::load_checkpoint(checkpoint);
    vocab = conflict::Vocabulary::load(sibling_vocab(checkpoint, vocab_path));
  } else {
    vocab = conflict::Vocabulary::build({tokens_u, tokens_v}, 1);
    conflict::ModelConfig c;
    c.vocab_size = vocab.size();
    c.embed_dim = 16;
    c.hidden_dim = 16;
    c.mode = conflict::InteractionMode::kAttention;
    loaded = conflict::LoadedCheckpoint{conflict::PairClassifier::init(c, seed), {}};
  }
  const auto& model = loaded->model;
  std::optional<conflict::NoGradGuard> no_grad(std::in_place);
  const auto ids_u = to_ids(tokens_u, vocab), ids_v = to_ids(tokens_v, vocab);
  const auto u = conflict::encode(ids_u, model.embedding, model.gru1, model.gru2);
  const auto v = conflict::encode(ids_v, model.embedding, model.gru1, model.gru2);
  const auto& ip = model.interaction;
  const bool use_attention = ip.attention.has_value();
  const auto scores = use_attention
                          ? conflict::attention_scores(conflict::project(u, ip.attention->wu),
                                                       conflict::project(v, ip.attention->wv))
                          : conflict::conflict_scores(conflict::project(u, ip.conflict->wu),
                                                      conflict::project(v, ip.conflict->wv), ip.conflict->ws);
  const auto weights = conflict::normalize(scores, v.length);
  const auto report = conflict::attention_floor_report(scores);

  std::cout << (use_attention ? "attention" : "conflict") << " weights of \"" << q1 << "\" over \"" << q2
            << "\" (N=" << tokens_v.size() << ", floor 1/N=" << std::setprecision(6) << report.rows.front().floor
            << ")\n";
  std::cout << std::left << std::setw(16) << "token";
  for (const auto& t : tokens_v) std::cout << std::setw(12) << t;
  std::cout << std::setw(12) << "max" << "margin\n" << std::fixed << std::setprecision(6);
  for (std::size_t i = 0; i < tokens_u.size(); ++i) {
    std::cout << std::setw(16) << tokens_u[i];
    for (std::size_t j = 0; j < tokens_v.size(); ++j) std::cout << std::setw(12) << weights.values(i, j);
    std::cout << std::setw(12) << report.rows[i].max_weight << report.rows[i].margin << '\n';
  }
  no_grad.reset();
  std::mt19937_64 rng(seed);
  const auto probe = conflict::adversarial_floor_probe(tokens_v.size(), 2000, 1.0, rng);
  std::cout << "adversarial descent on a length-" << tokens_v.size() << " score row: lowest max weight "
            << probe.lowest_max_weight << " vs floor " << probe.floor << '\n';
  std::cout << "every row max >= 1/N: " << (report.holds ? "yes" : "no") << '\n';
  return report.holds ? 0 : 1;
}

int run_gradcheck(std::uint64_t seed) {
  constexpr double kOpTolerance = 1e-4;
  constexpr double kModelTolerance = 1e-3;
  bool ok = true;
  std::cout << std::scientific << std::setprecision(3);
  for (const auto& r : conflict::run_op_gradient_suite(seed)) {
    const bool pass = r.max_relative_error < kOpTolerance;
    ok = ok && pass;
    std::cout << (pass ? "PASS " : "FAIL ") << r.name << " max_rel_err=" << r.max_relative_error << '\n';
  }
  for (auto mode : {conflict::InteractionMode::kAttention, conflict::InteractionMode::kConflict,
                    conflict::InteractionMode::kCombined}) {
    const auto r = conflict::run_model_gradient_check(mode, seed);
    const bool pass = r.max_relative_error < kModelTolerance;
    ok = ok && pass;
    std::cout << (pass ? "PASS " : "FAIL ") << r.name << " entries=" << r.entries_checked
              << " max_rel_err=" << r.max_relative_error << " worst=" << r.worst_parameter << '\n';
  }
  return ok ? 0 : 1;
}

int run_gen_synthetic(std::size_t n, double rate, std::uint64_t seed, const std::string& out) {
  const auto records = conflict::generate_contrastive_corpus(n, rate, seed);
  conflict::write_quora_tsv(out, records);
  std::cout << "wrote " << records.size() << " pairs to " << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attention and conflict interaction layers for sequence-pair classification"};
  app.require_subcommand(1);

  std::string data, mode, config_path, out, checkpoint, vocab, q1, q2, split = "test";
  std::optional<std::uint64_t> seed;
  std::size_t n = 4000;
  double rate = 0.5;

  auto* train = app.add_subcommand("train", "Train a classifier on a question-pair TSV");
  train->add_option("--data", data, "TSV with question1, question2, is_duplicate columns")->required();
  train->add_option("--mode", mode, "Interaction layer")->check(CLI::IsMember({"attention", "conflict", "combined"}));
  train->add_option("--config", config_path, "JSON hyperparameter file");
  train->add_option("--out", out, "Output directory")->required();
  train->add_option("--seed", seed, "Seed for split, init and training (default $CONFLICT_SEED or 1)");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "model.ckpt written by train")->required();
  eval->add_option("--data", data, "TSV the model was trained from")->required();
  eval->add_option("--vocab", vocab, "Vocabulary file (default: vocab.txt next to the checkpoint)");
  eval->add_option("--split", split, "test, train or all")->check(CLI::IsMember({"test", "train", "all"}));

  auto* heatmap = app.add_subcommand("heatmap", "Export attention/conflict weight matrices as CSV");
  heatmap->add_option("--checkpoint", checkpoint)->required();
  heatmap->add_option("--vocab", vocab);
  heatmap->add_option("--q1", q1, "First question (rows)")->required();
  heatmap->add_option("--q2", q2, "Second question (columns)")->required();
  heatmap->add_option("--out", out, "Output prefix; writes <out>.attention.csv and/or <out>.conflict.csv")
      ->required();

  auto* floor = app.add_subcommand("floor-demo", "Show that no softmax row can stay below 1/N");
  floor->add_option("--q1", q1)->required();
  floor->add_option("--q2", q2)->required();
  floor->add_option("--checkpoint", checkpoint, "Optional trained model; random weights otherwise");
  floor->add_option("--vocab", vocab);
  floor->add_option("--seed", seed);

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  gradcheck->add_option("--seed", seed);

  auto* gen = app.add_subcommand("gen-synthetic", "Write a contrastive near-duplicate corpus as TSV");
  gen->add_option("--n", n, "Number of pairs")->check(CLI::Range(2, 100000000));
  gen->add_option("--contrast-rate", rate, "Fraction of contrastive (label 0) pairs")->check(CLI::Range(0.0, 1.0));
  gen->add_option("--seed", seed);
  gen->add_option("--out", out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*train) return run_train(data, mode, config_path, out, seed);
    if (*eval) return run_eval(checkpoint, data, vocab, split);
    if (*heatmap) return run_heatmap(checkpoint, vocab, q1, q2, out);
    if (*floor) return run_floor_demo(q1, q2, checkpoint, vocab, seed.value_or(default_seed()));
    if (*gradcheck) return run_gradcheck(seed.value_or(default_seed()));
    if (*gen) return run_gen_synthetic(n, rate, seed.value_or(default_seed()), out);
  } catch (const conflict::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
