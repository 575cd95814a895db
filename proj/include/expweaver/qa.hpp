#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "expweaver/embedder.hpp"
#include "expweaver/environment.hpp"
#include "expweaver/rng.hpp"

// Retrieval QA over a tiny document corpus: Search[query] surfaces the
// best-matching passages by embedding cosine, Finish[answer] grades against
// the gold answer after normalization.

namespace expweaver {

struct CorpusDoc {
  std::string id;
  std::string title;
  std::string text;
};

inline void to_json(json& j, const CorpusDoc& d) {
  j = json{{"id", d.id}, {"title", d.title}, {"text", d.text}};
}

inline void from_json(const json& j, CorpusDoc& d) {
  j.at("id").get_to(d.id);
  j.at("title").get_to(d.title);
  j.at("text").get_to(d.text);
  if (d.text.empty()) throw_error(Errc::config_error, "corpus doc " + d.id + " has empty text");
}

inline std::vector<CorpusDoc> load_corpus_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw_error(Errc::config_error, "cannot open corpus file " + path.string());
  std::vector<CorpusDoc> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      docs.push_back(json::parse(line).get<CorpusDoc>());
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw_error(Errc::config_error,
                  path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return docs;
}

// One doc per *.txt file; the stem doubles as id and title. Sorted by
// filename so corpus order (and search tie-breaks) are stable.
inline std::vector<CorpusDoc> load_corpus_dir(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".txt")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<CorpusDoc> docs;
  for (const auto& file : files) {
    std::ifstream in(file);
    std::ostringstream text;
    text << in.rdbuf();
    if (text.str().empty())
      throw_error(Errc::config_error, "corpus doc " + file.string() + " has empty text");
    docs.push_back(CorpusDoc{file.stem().string(), file.stem().string(), text.str()});
  }
  return docs;
}

// Lowercase, strip punctuation, collapse whitespace, drop a leading article.
inline std::string normalize_answer_part(const std::string& part) {
  std::string cleaned;
  for (char c : part) {
    if (std::isalnum(static_cast<unsigned char>(c)))
      cleaned += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    else
      cleaned += ' ';
  }
  std::istringstream words(cleaned);
  std::vector<std::string> tokens;
  std::string w;
  while (words >> w) tokens.push_back(w);
  if (!tokens.empty() && (tokens[0] == "a" || tokens[0] == "an" || tokens[0] == "the"))
    tokens.erase(tokens.begin());
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out += ' ';
    out += tokens[i];
  }
  return out;
}

// Set equality over comma-separated parts, so "actor, director" matches
// "director, actor" and stray empties vanish.
inline bool answer_matches(const std::string& answer, const std::string& gold) {
  auto parts = [](const std::string& s) {
    std::set<std::string> out;
    std::string piece;
    std::istringstream in(s);
    while (std::getline(in, piece, ',')) {
      std::string norm = normalize_answer_part(piece);
      if (!norm.empty()) out.insert(norm);
    }
    return out;
  };
  std::set<std::string> a = parts(answer);
  std::set<std::string> g = parts(gold);
  return !g.empty() && a == g;
}

class QaEnv : public Environment {
 public:
  QaEnv() = default;

  // Test hook: fixed corpus, question, and gold answer.
  static QaEnv from_corpus(std::vector<CorpusDoc> docs, std::string question,
                           std::string gold_answer) {
    QaEnv env;
    env.preset_ = Preset{std::move(docs), std::move(question), std::move(gold_answer)};
    return env;
  }

  EnvKind kind() const override { return EnvKind::corpus_qa; }

  Observation reset(const TaskSpec& task) override {
    start_episode(task);
    if (preset_) {
      docs_ = preset_->docs;
      question_ = preset_->question;
      gold_ = preset_->gold;
    } else {
      generate_question(task.seed);
    }
    doc_embeddings_.clear();
    for (const auto& doc : docs_)
      doc_embeddings_.push_back(embedder_.embed(doc.title + "\n" + doc.text));
    return Observation{"Question: " + question_ +
                           "\nAvailable actions: Search[query], Finish[answer].",
                       0.0, false};
  }

  Observation step(const std::string& action_text) override {
    require_active();
    std::string action = detail::normalize_whitespace(action_text);
    Observation obs{"Nothing happens.", 0.0, false};
    auto open = action.find('[');
    if (open != std::string::npos && action.back() == ']') {
      std::string verb = detail::to_lower(action.substr(0, open));
      std::string arg = action.substr(open + 1, action.size() - open - 2);
      if (verb == "search") {
        obs.text = do_search(arg);
      } else if (verb == "finish") {
        bool correct = answer_matches(arg, gold_);
        obs = Observation{correct ? "Correct." : "Incorrect.", correct ? 1.0 : 0.0, true};
      }
    }
    return finish_step(std::move(obs));
  }

  std::string goal_text() const override { return question_; }
  const std::vector<CorpusDoc>& corpus() const { return docs_; }
  const std::string& gold_answer() const { return gold_; }

 private:
  struct Preset {
    std::vector<CorpusDoc> docs;
    std::string question;
    std::string gold;
  };

  // Top-3 passages by cosine against the query, ties by corpus order.
  std::string do_search(const std::string& query) {
    EmbeddingVector q = embedder_.embed(query);
    std::vector<std::pair<double, std::size_t>> ranked;
    for (std::size_t i = 0; i < docs_.size(); ++i)
      ranked.emplace_back(cosine(q, doc_embeddings_[i]), i);
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    std::string out;
    std::size_t shown = std::min<std::size_t>(3, ranked.size());
    for (std::size_t i = 0; i < shown; ++i) {
      if (i > 0) out += "\n\n";
      out += docs_[ranked[i].second].text;
    }
    return out.empty() ? "No results." : out;
  }

  void generate_question(std::uint64_t seed) {
    static const std::vector<std::pair<std::string, std::string>> kCapitals = {
        {"France", "Paris"},     {"Italy", "Rome"},      {"Japan", "Tokyo"},
        {"Canada", "Ottawa"},    {"Egypt", "Cairo"},     {"Spain", "Madrid"},
        {"Norway", "Oslo"},      {"Greece", "Athens"},   {"Peru", "Lima"},
        {"Kenya", "Nairobi"},    {"Austria", "Vienna"},  {"Ireland", "Dublin"},
        {"Thailand", "Bangkok"}, {"Cuba", "Havana"},     {"Portugal", "Lisbon"},
        {"Finland", "Helsinki"}};
    docs_.clear();
    for (std::size_t i = 0; i < kCapitals.size(); ++i) {
      const auto& [country, capital] = kCapitals[i];
      docs_.push_back(CorpusDoc{"doc-" + std::to_string(i), country,
                                capital + " is the capital of " + country +
                                    ". It is the seat of government of " + country + "."});
    }
    Pcg32 rng(mix_seeds(seed, fnv1a64("corpus_qa")));
    const auto& [country, capital] =
        kCapitals[rng.next_below(static_cast<std::uint32_t>(kCapitals.size()))];
    question_ = "What is the capital of " + country + "?";
    gold_ = capital;
  }

  std::optional<Preset> preset_;
  std::vector<CorpusDoc> docs_;
  std::vector<EmbeddingVector> doc_embeddings_;
  std::string question_;
  std::string gold_;
  LocalEmbedder embedder_;
};

}  // namespace expweaver
