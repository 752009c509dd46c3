#pragma once

// Template-generated near-duplicate question pairs. Paraphrase pairs (label 1)
// fill two independently chosen templates of one topic with the same slot
// word; contrastive pairs (label 0) fill them with two different slot words of
// that topic (another entity, or the antonym for verb topics).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "conflict/data.hpp"

namespace conflict {

struct ContrastivePair {
  SequencePairRecord record;
  std::string slot1;  // slot word used in text1
  std::string slot2;  // slot word used in text2
};

namespace detail {

struct Topic {
  std::vector<std::string_view> templates;  // "{}" marks the slot
  std::vector<std::string_view> words;
  bool antonyms = false;  // words come in pairs (2k, 2k+1)
};

inline const std::vector<Topic>& synthetic_topics() {
  static const std::vector<Topic> topics = {
      {{"what are the best ways to learn {} ?", "how do i learn {} ?", "how can i learn {} quickly ?",
        "what is the easiest way to learn {} ?"},
       {"french", "german", "spanish", "italian", "japanese", "chinese", "russian", "korean"}},
      {{"what is the population of {} ?", "how many people live in {} ?", "how populated is {} ?",
        "how many people are living in {} today ?"},
       {"india", "brazil", "canada", "australia", "mexico", "egypt", "norway", "peru"}},
      {{"what does a {} eat ?", "what is the diet of a {} ?", "what kind of food does a {} eat ?",
        "what do {} animals usually eat ?"},
       {"lion", "tiger", "horse", "rabbit", "shark", "eagle", "panda", "wolf"}},
      {{"how old is the {} ?", "what is the age of the {} ?", "when was the {} formed ?",
        "how many years old is the {} ?"},
       {"sun", "moon", "earth", "mars", "jupiter", "venus", "saturn", "mercury"}},
      {{"how can i {} weight fast ?", "what is the best way to {} weight ?", "how do i {} weight quickly ?",
        "what should i eat to {} weight ?"},
       {"gain", "lose", "increase", "reduce"},
       true},
      {{"how do i {} my blood pressure ?", "what can i do to {} my blood pressure ?",
        "how can i {} blood pressure naturally ?", "which foods {} blood pressure ?"},
       {"raise", "lower", "increase", "decrease"},
       true},
  };
  return topics;
}

inline std::string fill(std::string_view tmpl, std::string_view word) {
  std::string out(tmpl);
  auto pos = out.find("{}");
  out.replace(pos, 2, word);
  return out;
}

}  // namespace detail

/// `n` pairs, round(n · contrast_rate) of them contrastive, in shuffled order.
inline std::vector<ContrastivePair> generate_contrastive_pairs(std::size_t n, double contrast_rate,
                                                               std::uint64_t seed) {
  if (n < 2) throw ConfigError("synthetic corpus needs at least 2 pairs");
  if (!(contrast_rate >= 0.0 && contrast_rate <= 1.0)) throw ConfigError("contrast_rate must lie in [0, 1]");
  const auto& topics = detail::synthetic_topics();
  std::mt19937_64 rng(seed);
  const auto n_contrast = static_cast<std::size_t>(std::llround(contrast_rate * static_cast<double>(n)));
  std::vector<ContrastivePair> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const bool contrast = k < n_contrast;
    const auto& topic = topics[std::uniform_int_distribution<std::size_t>(0, topics.size() - 1)(rng)];
    std::uniform_int_distribution<std::size_t> pick_word(0, topic.words.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_template(0, topic.templates.size() - 1);
    const std::size_t w1 = pick_word(rng);
    std::size_t w2 = w1;
    if (contrast) {
      if (topic.antonyms) {
        w2 = w1 ^ 1u;
      } else {
        std::uniform_int_distribution<std::size_t> other(0, topic.words.size() - 2);
        w2 = other(rng);
        if (w2 >= w1) ++w2;
      }
    }
    const auto t1 = topic.templates[pick_template(rng)];
    const auto t2 = topic.templates[pick_template(rng)];
    ContrastivePair p;
    p.slot1 = std::string(topic.words[w1]);
    p.slot2 = std::string(topic.words[w2]);
    p.record = {detail::fill(t1, p.slot1), detail::fill(t2, p.slot2), contrast ? 0u : 1u};
    out.push_back(std::move(p));
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

inline std::vector<SequencePairRecord> generate_contrastive_corpus(std::size_t n, double contrast_rate,
                                                                   std::uint64_t seed) {
  std::vector<SequencePairRecord> out;
  for (auto& p : generate_contrastive_pairs(n, contrast_rate, seed)) out.push_back(std::move(p.record));
  return out;
}

/// Every slot word the generator can emit.
inline std::vector<std::string> synthetic_slot_words() {
  std::vector<std::string> out;
  for (const auto& t : detail::synthetic_topics())
    for (auto w : t.words) out.emplace_back(w);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace conflict
