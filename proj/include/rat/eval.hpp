#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace rat {

// Sampling metrics -------------------------------------------------------------

/// Unbiased estimate of the chance that at least one of k samples drawn
/// without replacement from n (c of them correct) is correct.
double pass_at_k(std::size_t n, std::size_t c, std::size_t k);

/// Mean correctness over repeated attempts at one task.
double score_repeated(const std::vector<bool>& attempts);

/// Percent change of `treatment` over `baseline`; baseline must be positive.
double relative_improvement(double baseline, double treatment);

struct EvalRecord {
  std::string task_id;
  std::string method;
  std::string checker;        // exact | numeric | plan
  std::vector<bool> attempts;  // one verdict per sample

  std::size_t n() const { return attempts.size(); }
  std::size_t c() const;
};

nlohmann::json to_json(const EvalRecord& record);
EvalRecord eval_record_from_json(const nlohmann::json& j);
void write_eval_records(const std::filesystem::path& path, const std::vector<EvalRecord>& records);
std::vector<EvalRecord> read_eval_records(const std::filesystem::path& path);

// Solution checking -------------------------------------------------------------

class SolutionChecker {
 public:
  virtual ~SolutionChecker() = default;
  /// `gold` is the task's gold record; its required fields depend on the checker.
  virtual bool check(std::string_view answer, const nlohmann::json& gold) const = 0;
  virtual const char* name() const = 0;
};

/// Whitespace-trimmed equality with gold["answer"].
class ExactMatchChecker final : public SolutionChecker {
 public:
  bool check(std::string_view answer, const nlohmann::json& gold) const override;
  const char* name() const override { return "exact"; }
};

/// Compares the last number in the answer (commas and a leading '$' ignored)
/// with gold["answer"] at a relative tolerance of 1e-6.
class NumericMatchChecker final : public SolutionChecker {
 public:
  bool check(std::string_view answer, const nlohmann::json& gold) const override;
  const char* name() const override { return "numeric"; }
};

/// Last number in text, if any.
std::optional<double> extract_last_number(std::string_view text);

// Plans -------------------------------------------------------------------------

enum class PlanAction { Gather, Craft, Smelt, Other };

const char* to_string(PlanAction action);

using ItemCount = std::pair<std::string, long>;

struct PlanStep {
  int index = 0;  // the number written after STEP
  PlanAction action = PlanAction::Other;
  std::string item;  // normalized, empty when the step names no item
  long quantity = 1;
  std::vector<ItemCount> inputs;  // filled from the recipe table when checked
  std::optional<std::string> tool;
  bool quantity_defaulted = false;  // no "Nx Item" quantity was found
  std::string text;
};

/// Lowercase, runs of non-alphanumerics collapsed to '_'.
std::string normalize_item(std::string_view name);

/// One step per line-initial STEP block. The item comes from a
/// "Minecraft item(s):" line when present, otherwise from the first "Nx Item"
/// pattern in the block.
std::vector<PlanStep> parse_plan(std::string_view text);

struct Recipe {
  std::vector<ItemCount> inputs;
  std::optional<std::string> tool;  // required present, never consumed
  long yield = 1;
  std::vector<std::string> aliases;
};

class RecipeTable {
 public:
  RecipeTable() = default;
  explicit RecipeTable(std::map<std::string, Recipe> recipes);

  /// Canonical item name: exact, then alias, then with a plural "s"/"es" dropped.
  /// Throws UnknownItem.
  const std::string& canonical(std::string_view item) const;
  const Recipe& at(std::string_view canonical_item) const;
  bool contains(std::string_view item) const;
  std::size_t size() const { return recipes_.size(); }

 private:
  std::map<std::string, Recipe, std::less<>> recipes_;
  std::map<std::string, std::string, std::less<>> aliases_;
};

/// {item: {"inputs": [[item, qty], ...], "tool": item?, "yield": n?, "aliases": [...]?}}
RecipeTable load_recipes(const nlohmann::json& j);
RecipeTable load_recipes(const std::filesystem::path& path);

struct Violation {
  std::optional<int> step_index;  // empty when only the goal is unmet
  std::string reason;
};

using Inventory = std::map<std::string, long>;

struct PlanVerdict {
  bool executable = false;
  std::optional<Violation> first_violation;
  Inventory inventory;
  std::vector<PlanStep> steps;  // with canonical items, inputs and tool bound
};

/// Simulates the plan from an empty inventory and stops at the first
/// violation. Unknown items raise UnknownItem rather than a violation.
PlanVerdict check_plan(const std::vector<PlanStep>& steps, const RecipeTable& recipes, const ItemCount& goal);

/// Parses the answer as a plan and checks it against gold {"goal": item, "quantity": n}.
class PlanChecker final : public SolutionChecker {
 public:
  explicit PlanChecker(std::shared_ptr<const RecipeTable> recipes) : recipes_(std::move(recipes)) {}
  bool check(std::string_view answer, const nlohmann::json& gold) const override;
  const char* name() const override { return "plan"; }

 private:
  std::shared_ptr<const RecipeTable> recipes_;
};

// Reports -----------------------------------------------------------------------

struct MeanSd {
  double mean = 0.0;
  std::optional<double> sd;  // sample sd; absent with fewer than two runs
};

struct MethodSummary {
  std::string method;
  std::size_t tasks = 0;
  std::optional<double> pass1;  // percent
  std::optional<double> pass5;  // percent, over tasks with at least 5 samples
  std::optional<double> accuracy;
  std::optional<MeanSd> executability;  // over runs of plan-checked records
};

/// Per-method summaries in method-name order.
std::vector<MethodSummary> summarize(const std::vector<EvalRecord>& records);

struct Report {
  std::string csv;
  std::string markdown;
};

/// Table of summaries plus one relative-improvement row per non-baseline
/// method. Cells that cannot be computed are left empty.
Report render_report(const std::vector<MethodSummary>& summaries, std::string_view baseline);

}  // namespace rat
