#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "expweaver/environment.hpp"
#include "expweaver/rng.hpp"

// Desk-scale shopping environment: Search[...] over a seeded catalog,
// Click[...] to open items / select options / buy. Buying scores the chosen
// item against the instruction's constraints and ends the episode.

namespace expweaver {

struct CatalogItem {
  std::string id;
  std::string title;
  double price = 0.0;
  // Ordered so option rows render deterministically.
  std::vector<std::pair<std::string, std::vector<std::string>>> options;
  std::map<std::string, std::string> selected;
};

struct ShopGoal {
  std::vector<std::string> attributes;  // matched as substrings of the title
  double price_cap = 0.0;
};

namespace detail {

inline bool contains_ci(const std::string& haystack, const std::string& needle) {
  return to_lower(haystack).find(to_lower(needle)) != std::string::npos;
}

inline std::string format_price(double price) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", price);
  return buf;
}

// Shortest decimal with at least one fractional digit: 1 → "1.0",
// 0.75 → "0.75" (the buy-now score line quotes this form).
inline std::string format_score(double score) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", score);
  std::string s = buf;
  while (s.size() > 1 && s.back() == '0' && s[s.size() - 2] != '.') s.pop_back();
  return s;
}

inline std::vector<std::string> tokenize_words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace detail

// Constraints: each required attribute, the price cap, and "every option
// dimension has a selection" each count one; score = matched / total.
inline double shop_score(const CatalogItem& item, const ShopGoal& goal) {
  int total = static_cast<int>(goal.attributes.size()) + 2;
  int matched = 0;
  for (const auto& attr : goal.attributes)
    if (detail::contains_ci(item.title, attr)) ++matched;
  if (item.price <= goal.price_cap) ++matched;
  bool all_selected = true;
  for (const auto& [dim, values] : item.options)
    if (!item.selected.count(dim)) all_selected = false;
  if (all_selected) ++matched;
  return static_cast<double>(matched) / total;
}

inline void to_json(json& j, const CatalogItem& item) {
  json options = json::array();
  for (const auto& [dim, values] : item.options)
    options.push_back(json{{"dimension", dim}, {"values", values}});
  j = json{{"id", item.id},
           {"title", item.title},
           {"price", item.price},
           {"options", options},
           {"selected", item.selected}};
}

inline void from_json(const json& j, CatalogItem& item) {
  j.at("id").get_to(item.id);
  j.at("title").get_to(item.title);
  j.at("price").get_to(item.price);
  item.options.clear();
  for (const auto& opt : j.at("options"))
    item.options.emplace_back(opt.at("dimension").get<std::string>(),
                              opt.at("values").get<std::vector<std::string>>());
  item.selected.clear();
  if (j.contains("selected")) j.at("selected").get_to(item.selected);
}

inline void to_json(json& j, const ShopGoal& goal) {
  j = json{{"attributes", goal.attributes}, {"price_cap", goal.price_cap}};
}

inline void from_json(const json& j, ShopGoal& goal) {
  j.at("attributes").get_to(goal.attributes);
  j.at("price_cap").get_to(goal.price_cap);
}

class ShopEnv : public Environment {
 public:
  ShopEnv() = default;

  // Test hook: exact catalog and constraints instead of a seeded build.
  static ShopEnv from_catalog(std::vector<CatalogItem> catalog, ShopGoal goal,
                              std::string instruction) {
    ShopEnv env;
    env.preset_ = Preset{std::move(catalog), std::move(goal), std::move(instruction)};
    return env;
  }

  EnvKind kind() const override { return EnvKind::shop; }

  Observation reset(const TaskSpec& task) override {
    start_episode(task);
    if (preset_) {
      catalog_ = preset_->catalog;
      goal_ = preset_->goal;
      instruction_ = preset_->instruction;
    } else {
      generate_catalog(task.seed);
    }
    for (auto& item : catalog_) item.selected.clear();
    on_item_ = false;
    current_item_ = 0;
    return Observation{search_page_text(), 0.0, false};
  }

  Observation step(const std::string& action_text) override {
    require_active();
    std::string action = detail::normalize_whitespace(action_text);
    Observation obs{"Nothing happens.", 0.0, false};
    auto open = action.find('[');
    if (open != std::string::npos && action.back() == ']') {
      std::string verb = detail::to_lower(action.substr(0, open));
      std::string arg = action.substr(open + 1, action.size() - open - 2);
      if (verb == "search") obs.text = do_search(arg);
      else if (verb == "click") obs = do_click(arg);
    }
    return finish_step(std::move(obs));
  }

  std::string goal_text() const override { return instruction_; }
  const std::vector<CatalogItem>& catalog() const { return catalog_; }
  const ShopGoal& goal() const { return goal_; }

 private:
  struct Preset {
    std::vector<CatalogItem> catalog;
    ShopGoal goal;
    std::string instruction;
  };

  std::string search_page_text() const {
    return "Instruction: " + instruction_ + "\n[Search]";
  }

  // Rank by the number of distinct query words found among the title words,
  // ties by catalog order; show the top five.
  std::string do_search(const std::string& query) {
    on_item_ = false;
    std::vector<std::string> query_words = detail::tokenize_words(query);
    std::set<std::string> distinct(query_words.begin(), query_words.end());
    std::vector<std::pair<int, std::size_t>> ranked;
    for (std::size_t i = 0; i < catalog_.size(); ++i) {
      std::vector<std::string> title_words = detail::tokenize_words(catalog_[i].title);
      std::set<std::string> title_set(title_words.begin(), title_words.end());
      int hits = 0;
      for (const auto& w : distinct)
        if (title_set.count(w)) ++hits;
      ranked.emplace_back(-hits, i);
    }
    std::sort(ranked.begin(), ranked.end());
    std::string out = "[Back to Search]";
    std::size_t shown = std::min<std::size_t>(5, ranked.size());
    for (std::size_t i = 0; i < shown; ++i) {
      const CatalogItem& item = catalog_[ranked[i].second];
      out += "\n[" + item.id + "]\n" + item.title + "\n$" + detail::format_price(item.price);
    }
    return out;
  }

  std::string item_page_text(const CatalogItem& item) const {
    std::string out;
    for (const auto& [dim, values] : item.options) {
      out += dim + " ";
      for (const auto& v : values) out += "[" + v + "]";
      out += "\n";
    }
    out += item.title + "\nPrice: $" + detail::format_price(item.price) + "\n[Buy Now]";
    return out;
  }

  Observation do_click(const std::string& arg) {
    std::string lowered = detail::to_lower(arg);
    if (lowered == "back to search") {
      on_item_ = false;
      return {search_page_text(), 0.0, false};
    }
    if (lowered == "buy now") {
      if (!on_item_) return {"Nothing happens.", 0.0, false};
      double score = shop_score(catalog_[current_item_], goal_);
      return {"Your score (min 0.0, max 1.0): " + detail::format_score(score), score, true};
    }
    for (std::size_t i = 0; i < catalog_.size(); ++i) {
      if (detail::to_lower(catalog_[i].id) == lowered) {
        on_item_ = true;
        current_item_ = i;
        catalog_[i].selected.clear();
        return {item_page_text(catalog_[i]), 0.0, false};
      }
    }
    if (on_item_) {
      CatalogItem& item = catalog_[current_item_];
      for (const auto& [dim, values] : item.options) {
        for (const auto& v : values) {
          if (detail::to_lower(v) == lowered) {
            item.selected[dim] = v;
            return {"You have clicked " + v + ".", 0.0, false};
          }
        }
      }
    }
    return {"Nothing happens.", 0.0, false};
  }

  // Seeded catalog of 12–20 items plus an instruction whose perfect purchase
  // is guaranteed to exist (attributes and cap come from a target item).
  void generate_catalog(std::uint64_t seed) {
    Pcg32 rng(mix_seeds(seed, fnv1a64("shop")));
    const std::vector<std::string> brands = {"Acme", "Nova", "Summit", "Harbor", "Cedar",
                                             "Quill"};
    const std::vector<std::string> colors = {"black", "white", "red", "blue", "green",
                                             "gray"};
    const std::vector<std::string> mods = {"long sleeve", "short sleeve", "wireless",
                                           "portable",    "ceramic",      "cotton",
                                           "leather",     "waterproof"};
    const std::vector<std::string> nouns = {"t-shirt",  "jacket",  "sneakers", "backpack",
                                            "lamp",     "mug",     "headphones", "blanket",
                                            "kettle",   "notebook"};
    const std::vector<std::string> sizes = {"small", "medium", "large", "x-large"};

    catalog_.clear();
    std::size_t n = 12 + rng.next_below(9);
    std::set<std::string> seen_ids;
    std::vector<std::array<std::string, 3>> pieces;  // color, mod, noun per item
    for (std::size_t i = 0; i < n; ++i) {
      CatalogItem item;
      do {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "B0%07u", rng.next() % 10000000u);
        item.id = buf;
      } while (!seen_ids.insert(item.id).second);
      std::string color = colors[rng.next_below(static_cast<std::uint32_t>(colors.size()))];
      std::string mod = mods[rng.next_below(static_cast<std::uint32_t>(mods.size()))];
      std::string noun = nouns[rng.next_below(static_cast<std::uint32_t>(nouns.size()))];
      item.title = brands[rng.next_below(static_cast<std::uint32_t>(brands.size()))] + " " +
                   color + " " + mod + " " + noun;
      item.price = 5.0 + rng.next_below(9000) / 100.0;
      std::vector<std::string> color_values{color};
      for (const auto& c : colors)
        if (c != color && rng.bernoulli(0.4)) color_values.push_back(c);
      item.options.emplace_back("color", std::move(color_values));
      if (noun == "t-shirt" || noun == "jacket" || noun == "sneakers")
        item.options.emplace_back("size",
                                  std::vector<std::string>(sizes.begin(), sizes.end()));
      catalog_.push_back(std::move(item));
      pieces.push_back({std::move(color), std::move(mod), std::move(noun)});
    }

    std::size_t target = rng.next_below(static_cast<std::uint32_t>(catalog_.size()));
    goal_.attributes.assign(pieces[target].begin(), pieces[target].end());
    goal_.price_cap = catalog_[target].price + 5.0 + rng.next_below(1500) / 100.0;
    std::string attr_text;
    for (std::size_t i = 0; i < goal_.attributes.size(); ++i) {
      if (i > 0) attr_text += " ";
      attr_text += goal_.attributes[i];
    }
    instruction_ = "i am looking for a " + attr_text + ", and price lower than " +
                   detail::format_price(goal_.price_cap) + " dollars.";
  }

  std::optional<Preset> preset_;
  std::vector<CatalogItem> catalog_;
  ShopGoal goal_;
  std::string instruction_;
  bool on_item_ = false;
  std::size_t current_item_ = 0;
};

}  // namespace expweaver
