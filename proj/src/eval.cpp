#include "rat/eval.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "rat/error.hpp"

namespace rat {

using nlohmann::json;

double pass_at_k(std::size_t n, std::size_t c, std::size_t k) {
  if (n < 1 || k < 1) throw Error(ErrorCode::InvalidArgument, "pass@k needs n >= 1 and k >= 1");
  if (k > n) throw Error(ErrorCode::InvalidArgument, "pass@k: k exceeds n");
  if (c > n) throw Error(ErrorCode::InvalidArgument, "pass@k: c exceeds n");
  if (n - c < k) return 1.0;
  // 1 - C(n-c, k) / C(n, k) as a product over i in (n-c, n].
  double miss = 1.0;
  for (std::size_t i = n - c + 1; i <= n; ++i) miss *= 1.0 - static_cast<double>(k) / static_cast<double>(i);
  return 1.0 - miss;
}

double score_repeated(const std::vector<bool>& attempts) {
  if (attempts.empty()) throw Error(ErrorCode::InvalidArgument, "score_repeated needs at least one attempt");
  const auto hits = std::count(attempts.begin(), attempts.end(), true);
  return static_cast<double>(hits) / static_cast<double>(attempts.size());
}

double relative_improvement(double baseline, double treatment) {
  if (!std::isfinite(baseline) || !std::isfinite(treatment)) {
    throw Error(ErrorCode::InvalidArgument, "relative_improvement needs finite values");
  }
  if (baseline <= 0.0) throw Error(ErrorCode::InvalidArgument, "relative_improvement needs a positive baseline");
  return 100.0 * (treatment - baseline) / baseline;
}

// Records ----------------------------------------------------------------------

std::size_t EvalRecord::c() const {
  return static_cast<std::size_t>(std::count(attempts.begin(), attempts.end(), true));
}

json to_json(const EvalRecord& r) {
  return json{{"task_id", r.task_id}, {"method", r.method}, {"checker", r.checker},
              {"n", r.n()},           {"c", r.c()},           {"attempts", r.attempts}};
}

EvalRecord eval_record_from_json(const json& j) {
  EvalRecord r;
  try {
    r.task_id = j.at("task_id").get<std::string>();
    r.method = j.value("method", "");
    r.checker = j.value("checker", "");
    r.attempts = j.at("attempts").get<std::vector<bool>>();
    if (j.contains("n") && j.at("n").get<std::size_t>() != r.n()) {
      throw Error(ErrorCode::InvalidArgument, "record '" + r.task_id + "': n differs from the attempt count");
    }
    if (j.contains("c") && j.at("c").get<std::size_t>() != r.c()) {
      throw Error(ErrorCode::InvalidArgument, "record '" + r.task_id + "': c differs from the correct attempts");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("eval record: ") + e.what());
  }
  if (r.attempts.empty()) throw Error(ErrorCode::InvalidArgument, "record '" + r.task_id + "' has no attempts");
  return r;
}

void write_eval_records(const std::filesystem::path& path, const std::vector<EvalRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  for (const auto& r : records) out << to_json(r).dump() << '\n';
  if (!out) throw Error(ErrorCode::Io, "failed writing " + path.string());
}

std::vector<EvalRecord> read_eval_records(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::vector<EvalRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(eval_record_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Io, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

// Checkers ---------------------------------------------------------------------

namespace {

std::string_view trim_view(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string gold_text(const json& gold) {
  const auto& a = gold.at("answer");
  if (a.is_string()) return a.get<std::string>();
  return a.dump();
}

}  // namespace

bool ExactMatchChecker::check(std::string_view answer, const json& gold) const {
  return trim_view(answer) == trim_view(gold_text(gold));
}

std::optional<double> extract_last_number(std::string_view text) {
  std::optional<double> last;
  std::size_t i = 0;
  while (i < text.size()) {
    const bool sign = text[i] == '-' && i + 1 < text.size() && std::isdigit(static_cast<unsigned char>(text[i + 1]));
    if (!sign && !std::isdigit(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    std::string digits;
    if (sign) digits += text[i++];
    bool dot = false;
    while (i < text.size()) {
      const char ch = text[i];
      if (std::isdigit(static_cast<unsigned char>(ch))) {
        digits += ch;
      } else if (ch == ',' && i + 1 < text.size() && std::isdigit(static_cast<unsigned char>(text[i + 1])) && !dot) {
        // thousands separator
      } else if (ch == '.' && !dot && i + 1 < text.size() && std::isdigit(static_cast<unsigned char>(text[i + 1]))) {
        dot = true;
        digits += ch;
      } else {
        break;
      }
      ++i;
    }
    double v = 0.0;
    const auto res = std::from_chars(digits.data(), digits.data() + digits.size(), v);
    if (res.ec == std::errc()) last = v;
  }
  return last;
}

bool NumericMatchChecker::check(std::string_view answer, const json& gold) const {
  const auto& g = gold.at("answer");
  const std::optional<double> expected = g.is_number() ? std::optional(g.get<double>()) : extract_last_number(gold_text(gold));
  if (!expected) throw Error(ErrorCode::InvalidArgument, "numeric gold answer has no number");
  const auto got = extract_last_number(answer);
  if (!got) return false;
  return std::abs(*got - *expected) <= 1e-6 * std::max(1.0, std::abs(*expected));
}

// Plans ------------------------------------------------------------------------

const char* to_string(PlanAction action) {
  switch (action) {
    case PlanAction::Gather: return "gather";
    case PlanAction::Craft: return "craft";
    case PlanAction::Smelt: return "smelt";
    case PlanAction::Other: return "other";
  }
  return "other";
}

std::string normalize_item(std::string_view name) {
  std::string out;
  bool gap = false;
  for (const char ch : name) {
    const auto u = static_cast<unsigned char>(ch);
    if (std::isalnum(u)) {
      if (gap && !out.empty()) out += '_';
      out += static_cast<char>(std::tolower(u));
      gap = false;
    } else {
      gap = true;
    }
  }
  return out;
}

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    lines.push_back(text.substr(pos, eol - pos));
    if (eol == text.size()) break;
    pos = eol + 1;
  }
  return lines;
}

// Index of a line-initial "STEP <n>" marker, if any.
std::optional<int> step_marker(std::string_view line) {
  line = trim_view(line);
  if (line.size() < 5 || lower(line.substr(0, 4)) != "step") return std::nullopt;
  std::size_t i = 4;
  while (i < line.size() && line[i] == ' ') ++i;
  int value = 0;
  const auto res = std::from_chars(line.data() + i, line.data() + line.size(), value);
  if (res.ec != std::errc()) return std::nullopt;
  return value;
}

std::string_view after_marker(std::string_view line) {
  line = trim_view(line);
  std::size_t i = 4;
  while (i < line.size() && (line[i] == ' ' || std::isdigit(static_cast<unsigned char>(line[i])))) ++i;
  if (i < line.size() && (line[i] == ':' || line[i] == '.')) ++i;
  return trim_view(line.substr(i));
}

// Value of a "- Minecraft item(s): ..." line.
std::optional<std::string_view> item_line(std::string_view line) {
  line = trim_view(line);
  if (!line.empty() && line.front() == '-') line = trim_view(line.substr(1));
  const auto l = lower(line);
  for (std::string_view prefix : {"minecraft items:", "minecraft item:"}) {
    if (l.starts_with(prefix)) return trim_view(line.substr(prefix.size()));
  }
  return std::nullopt;
}

const std::set<std::string, std::less<>>& item_stopwords() {
  static const std::set<std::string, std::less<>> words{"in", "into", "to", "for", "and", "from", "with",
                                                        "using", "of", "on", "at", "as", "or", "by"};
  return words;
}

// Reads "Item Name" words starting at `pos`, stopping at punctuation or a stopword.
std::string read_item_name(std::string_view s, std::size_t pos) {
  std::string name;
  while (pos < s.size()) {
    while (pos < s.size() && s[pos] == ' ') ++pos;
    std::size_t end = pos;
    while (end < s.size() && (std::isalpha(static_cast<unsigned char>(s[end])) || s[end] == '\'' || s[end] == '-')) {
      ++end;
    }
    if (end == pos) break;
    const auto word = s.substr(pos, end - pos);
    if (item_stopwords().contains(lower(word))) break;
    if (!name.empty()) name += ' ';
    name += word;
    pos = end;
  }
  return normalize_item(name);
}

struct Quantified {
  long quantity;
  std::string item;
};

// First "<N>x <Item>" occurrence; "3x3" does not count.
std::optional<Quantified> find_quantified(std::string_view s) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) continue;
    if (i > 0 && std::isalnum(static_cast<unsigned char>(s[i - 1]))) continue;
    std::size_t j = i;
    while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
    std::size_t k = j;
    while (k < s.size() && s[k] == ' ') ++k;
    if (k >= s.size() || (s[k] != 'x' && s[k] != 'X')) {
      i = j;
      continue;
    }
    ++k;
    if (k >= s.size() || s[k] != ' ') {
      i = j;
      continue;
    }
    auto item = read_item_name(s, k);
    if (item.empty()) {
      i = j;
      continue;
    }
    long q = 0;
    std::from_chars(s.data() + i, s.data() + j, q);
    return Quantified{q, std::move(item)};
  }
  return std::nullopt;
}

struct VerbClass {
  PlanAction action;
  std::vector<std::string_view> stems;
};

const std::vector<VerbClass>& verb_classes() {
  static const std::vector<VerbClass> classes{
      {PlanAction::Smelt, {"smelt"}},
      {PlanAction::Craft, {"craft", "create", "convert", "make", "combine", "turn"}},
      {PlanAction::Gather,
       {"gather", "chop", "mine", "collect", "punch", "find", "dig", "explore", "break", "obtain", "get"}},
  };
  return classes;
}

// True when `word` is `stem` or a regular inflection of it.
bool inflects(std::string_view word, std::string_view stem) {
  if (!word.starts_with(stem)) {
    // make -> making
    if (stem.back() == 'e' && word.starts_with(stem.substr(0, stem.size() - 1))) {
      const auto rest = word.substr(stem.size() - 1);
      return rest == "ing";
    }
    return false;
  }
  const auto rest = word.substr(stem.size());
  if (rest.empty() || rest == "s" || rest == "es" || rest == "ed" || rest == "d" || rest == "ing") return true;
  // chop -> chopping, dig -> digging
  if (rest.size() >= 3 && rest[0] == stem.back()) {
    const auto tail = rest.substr(1);
    return tail == "ing" || tail == "ed";
  }
  return false;
}

PlanAction classify(std::string_view instruction) {
  std::size_t pos = 0;
  while (pos < instruction.size()) {
    while (pos < instruction.size() && !std::isalpha(static_cast<unsigned char>(instruction[pos]))) ++pos;
    std::size_t end = pos;
    while (end < instruction.size() && std::isalpha(static_cast<unsigned char>(instruction[end]))) ++end;
    if (end == pos) break;
    const auto word = lower(instruction.substr(pos, end - pos));
    for (const auto& cls : verb_classes()) {
      for (const auto stem : cls.stems) {
        if (inflects(word, stem)) return cls.action;
      }
    }
    pos = end;
  }
  return PlanAction::Other;
}

PlanStep parse_block(int index, const std::vector<std::string_view>& lines) {
  PlanStep step;
  step.index = index;
  std::string instruction;
  std::optional<std::string_view> declared;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string_view line = i == 0 ? after_marker(lines[i]) : trim_view(lines[i]);
    // LaTeX-style line ends are common in copied plans.
    while (line.ends_with("\\")) line = trim_view(line.substr(0, line.size() - 1));
    if (!step.text.empty()) step.text += '\n';
    step.text += line;
    if (auto value = item_line(line)) {
      if (!declared) declared = *value;
      continue;
    }
    if (!instruction.empty()) instruction += ' ';
    instruction += line;
  }

  if (declared) {
    if (auto q = find_quantified(*declared)) {
      step.item = q->item;
      step.quantity = q->quantity;
    } else {
      step.item = read_item_name(*declared, 0);
      step.quantity_defaulted = true;
    }
  } else if (auto q = find_quantified(instruction)) {
    step.item = q->item;
    step.quantity = q->quantity;
  } else {
    step.quantity_defaulted = true;
  }
  if (step.quantity < 1) {
    step.quantity = 1;
    step.quantity_defaulted = true;
  }
  step.action = classify(instruction);
  return step;
}

}  // namespace

std::vector<PlanStep> parse_plan(std::string_view text) {
  if (trim_view(text).empty()) throw Error(ErrorCode::InvalidArgument, "plan text is empty");
  const auto lines = split_lines(text);
  std::vector<PlanStep> steps;
  std::optional<int> current;
  std::vector<std::string_view> block;
  for (const auto line : lines) {
    if (auto idx = step_marker(line)) {
      if (current) steps.push_back(parse_block(*current, block));
      current = idx;
      block.clear();
    }
    if (current) block.push_back(line);
  }
  if (current) steps.push_back(parse_block(*current, block));
  if (steps.empty()) throw Error(ErrorCode::InvalidArgument, "plan has no STEP blocks");
  return steps;
}

// Recipes ------------------------------------------------------------------------

RecipeTable::RecipeTable(std::map<std::string, Recipe> recipes) {
  for (auto& [item, recipe] : recipes) {
    if (recipe.yield < 1) throw Error(ErrorCode::Config, "recipe '" + item + "' has a yield below 1");
    for (const auto& [input, qty] : recipe.inputs) {
      if (qty < 1) throw Error(ErrorCode::Config, "recipe '" + item + "' needs a positive quantity of " + input);
    }
    for (const auto& alias : recipe.aliases) {
      if (recipes.contains(alias)) continue;
      if (!aliases_.emplace(alias, item).second) {
        throw Error(ErrorCode::Config, "alias '" + alias + "' names two items");
      }
    }
    recipes_.emplace(item, std::move(recipe));
  }
  for (auto& [item, recipe] : recipes_) {
    for (auto& [input, qty] : recipe.inputs) input = canonical(input);
    if (recipe.tool) recipe.tool = canonical(*recipe.tool);
  }
  // Reject cycles so every item is obtainable from gathered ones.
  std::map<std::string, int, std::less<>> state;  // 1 visiting, 2 done
  std::function<void(const std::string&)> visit = [&](const std::string& item) {
    auto& s = state[item];
    if (s == 2) return;
    if (s == 1) throw Error(ErrorCode::Config, "recipe cycle through '" + item + "'");
    s = 1;
    for (const auto& [input, _] : recipes_.find(item)->second.inputs) visit(input);
    state[item] = 2;
  };
  for (const auto& [item, _] : recipes_) visit(item);
}

const std::string& RecipeTable::canonical(std::string_view item) const {
  const std::string key = normalize_item(item);
  if (auto it = recipes_.find(key); it != recipes_.end()) return it->first;
  if (auto it = aliases_.find(key); it != aliases_.end()) return it->second;
  for (std::string_view suffix : {"es", "s"}) {
    if (key.size() > suffix.size() && std::string_view(key).ends_with(suffix)) {
      const std::string stem = key.substr(0, key.size() - suffix.size());
      if (auto it = recipes_.find(stem); it != recipes_.end()) return it->first;
      if (auto it = aliases_.find(stem); it != aliases_.end()) return it->second;
    }
  }
  throw Error(ErrorCode::UnknownItem, "no recipe entry for item '" + std::string(item) + "'");
}

const Recipe& RecipeTable::at(std::string_view canonical_item) const {
  const auto it = recipes_.find(canonical_item);
  if (it == recipes_.end()) {
    throw Error(ErrorCode::UnknownItem, "no recipe entry for item '" + std::string(canonical_item) + "'");
  }
  return it->second;
}

bool RecipeTable::contains(std::string_view item) const {
  try {
    canonical(item);
    return true;
  } catch (const Error&) {
    return false;
  }
}

RecipeTable load_recipes(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::Config, "recipe table must be a JSON object");
  std::map<std::string, Recipe> recipes;
  try {
    for (const auto& [item, spec] : j.items()) {
      Recipe r;
      for (const auto& pair : spec.value("inputs", json::array())) {
        r.inputs.emplace_back(normalize_item(pair.at(0).get<std::string>()), pair.at(1).get<long>());
      }
      if (spec.contains("tool") && !spec.at("tool").is_null()) r.tool = normalize_item(spec.at("tool").get<std::string>());
      r.yield = spec.value("yield", 1L);
      for (const auto& alias : spec.value("aliases", json::array())) r.aliases.push_back(normalize_item(alias.get<std::string>()));
      recipes.emplace(normalize_item(item), std::move(r));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Config, std::string("recipe table: ") + e.what());
  }
  return RecipeTable(std::move(recipes));
}

RecipeTable load_recipes(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open recipe table " + path.string());
  try {
    return load_recipes(json::parse(in));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Config, path.string() + ": " + e.what());
  }
}

namespace {

std::string amount(const std::string& item, long qty) { return item + "×" + std::to_string(qty); }

}  // namespace

PlanVerdict check_plan(const std::vector<PlanStep>& steps, const RecipeTable& recipes, const ItemCount& goal) {
  if (goal.second < 1) throw Error(ErrorCode::InvalidArgument, "goal quantity must be at least 1");
  const std::string goal_item = recipes.canonical(goal.first);

  PlanVerdict verdict;
  Inventory& inv = verdict.inventory;
  auto violate = [&](int index, std::string reason) {
    verdict.first_violation = Violation{index, std::move(reason)};
    verdict.executable = false;
    return verdict;
  };

  for (const auto& original : steps) {
    PlanStep step = original;
    if (step.item.empty()) {
      verdict.steps.push_back(std::move(step));
      continue;
    }
    step.item = recipes.canonical(step.item);
    const Recipe& recipe = recipes.at(step.item);
    step.tool = recipe.tool;
    if (step.action == PlanAction::Other) step.action = recipe.inputs.empty() ? PlanAction::Gather : PlanAction::Craft;

    if (step.action == PlanAction::Gather) {
      verdict.steps.push_back(step);
      if (recipe.inputs.empty() && recipe.tool && inv[*recipe.tool] < 1) {
        return violate(step.index, "missing tool " + *recipe.tool);
      }
      inv[step.item] += step.quantity;
      continue;
    }

    if (recipe.inputs.empty()) {
      verdict.steps.push_back(step);
      return violate(step.index, "no recipe to " + std::string(to_string(step.action)) + " " + step.item);
    }
    const long crafts = (step.quantity + recipe.yield - 1) / recipe.yield;
    for (const auto& [input, qty] : recipe.inputs) step.inputs.emplace_back(input, qty * crafts);
    verdict.steps.push_back(step);
    if (recipe.tool && inv[*recipe.tool] < 1) return violate(step.index, "missing tool " + *recipe.tool);
    for (const auto& [input, need] : step.inputs) {
      if (inv[input] < need) return violate(step.index, "missing input " + amount(input, need));
    }
    for (const auto& [input, need] : step.inputs) inv[input] -= need;
    inv[step.item] += recipe.yield * crafts;
  }

  if (inv[goal_item] < goal.second) {
    verdict.first_violation = Violation{std::nullopt, "goal not met: need " + amount(goal_item, goal.second)};
    verdict.executable = false;
    return verdict;
  }
  verdict.executable = true;
  return verdict;
}

bool PlanChecker::check(std::string_view answer, const json& gold) const {
  const ItemCount goal{gold.at("goal").get<std::string>(), gold.value("quantity", 1L)};
  std::vector<PlanStep> steps;
  try {
    steps = parse_plan(answer);
  } catch (const Error&) {
    return false;
  }
  return check_plan(steps, *recipes_, goal).executable;
}

// Reports ------------------------------------------------------------------------

std::vector<MethodSummary> summarize(const std::vector<EvalRecord>& records) {
  std::map<std::string, std::vector<const EvalRecord*>> by_method;
  for (const auto& r : records) {
    if (r.attempts.empty()) throw Error(ErrorCode::InvalidArgument, "record '" + r.task_id + "' has no attempts");
    by_method[r.method].push_back(&r);
  }

  std::vector<MethodSummary> out;
  for (const auto& [method, rs] : by_method) {
    MethodSummary s;
    s.method = method;
    s.tasks = rs.size();
    double p1 = 0.0, acc = 0.0, p5 = 0.0;
    std::size_t n5 = 0;
    std::vector<const EvalRecord*> plans;
    for (const auto* r : rs) {
      p1 += pass_at_k(r->n(), r->c(), 1);
      acc += score_repeated(r->attempts);
      if (r->n() >= 5) {
        p5 += pass_at_k(r->n(), r->c(), 5);
        ++n5;
      }
      if (r->checker == "plan") plans.push_back(r);
    }
    s.pass1 = 100.0 * p1 / static_cast<double>(rs.size());
    s.accuracy = 100.0 * acc / static_cast<double>(rs.size());
    if (n5 > 0) s.pass5 = 100.0 * p5 / static_cast<double>(n5);
    if (!plans.empty()) {
      // Run r is attempt r of every plan task; only runs every task has count.
      std::size_t runs = plans.front()->n();
      for (const auto* r : plans) runs = std::min(runs, r->n());
      std::vector<double> rates;
      for (std::size_t run = 0; run < runs; ++run) {
        double hits = 0.0;
        for (const auto* r : plans) hits += r->attempts[run] ? 1.0 : 0.0;
        rates.push_back(100.0 * hits / static_cast<double>(plans.size()));
      }
      MeanSd ms;
      for (double v : rates) ms.mean += v;
      ms.mean /= static_cast<double>(rates.size());
      if (rates.size() >= 2) {
        double ss = 0.0;
        for (double v : rates) ss += (v - ms.mean) * (v - ms.mean);
        ms.sd = std::sqrt(ss / static_cast<double>(rates.size() - 1));
      }
      s.executability = ms;
    }
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

std::string fixed2(std::optional<double> v) {
  if (!v) return {};
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", *v);
  return buf;
}

std::string signed2(std::optional<double> v) {
  if (!v) return {};
  char buf[64];
  std::snprintf(buf, sizeof buf, "%+.2f", *v);
  return buf;
}

std::optional<double> rel(std::optional<double> base, std::optional<double> treat) {
  if (!base || !treat || *base <= 0.0) return std::nullopt;
  return relative_improvement(*base, *treat);
}

std::optional<double> exec_mean(const MethodSummary& s) {
  return s.executability ? std::optional(s.executability->mean) : std::nullopt;
}

std::optional<double> exec_sd(const MethodSummary& s) {
  return s.executability ? s.executability->sd : std::nullopt;
}

}  // namespace

Report render_report(const std::vector<MethodSummary>& summaries, std::string_view baseline) {
  std::ostringstream csv;
  std::ostringstream md;
  csv << "row,method,tasks,pass@1,pass@5,accuracy,executability_mean,executability_sd\n";
  md << "| Method | Tasks | pass@1 | pass@5 | Accuracy | Executability |\n";
  md << "|---|---:|---:|---:|---:|---:|\n";
  for (const auto& s : summaries) {
    csv << "absolute," << s.method << ',' << s.tasks << ',' << fixed2(s.pass1) << ',' << fixed2(s.pass5) << ','
        << fixed2(s.accuracy) << ',' << fixed2(exec_mean(s)) << ',' << fixed2(exec_sd(s)) << '\n';
    std::string exec = fixed2(exec_mean(s));
    if (exec_sd(s)) exec += " ± " + fixed2(exec_sd(s));
    md << "| " << s.method << " | " << s.tasks << " | " << fixed2(s.pass1) << " | " << fixed2(s.pass5) << " | "
       << fixed2(s.accuracy) << " | " << exec << " |\n";
  }

  const auto base = std::find_if(summaries.begin(), summaries.end(),
                                 [&](const MethodSummary& s) { return s.method == baseline; });
  if (base != summaries.end()) {
    for (const auto& s : summaries) {
      if (s.method == baseline) continue;
      const auto p1 = rel(base->pass1, s.pass1);
      const auto p5 = rel(base->pass5, s.pass5);
      const auto acc = rel(base->accuracy, s.accuracy);
      const auto ex = rel(exec_mean(*base), exec_mean(s));
      csv << "relative_vs_" << baseline << ',' << s.method << ",," << signed2(p1) << ',' << signed2(p5) << ','
          << signed2(acc) << ',' << signed2(ex) << ",\n";
      md << "| " << s.method << " vs " << baseline << " (rel. %) |  | " << signed2(p1) << " | " << signed2(p5)
         << " | " << signed2(acc) << " | " << signed2(ex) << " |\n";
    }
  }
  md << "\nRelative rows give 100 * (method - " << baseline << ") / " << baseline
     << ". Executability is the mean and sample standard deviation over runs.\n";
  return {csv.str(), md.str()};
}

}  // namespace rat
