#include "tablebench/analytics/aggregate.hpp"

#include <algorithm>
#include <map>

#include "tablebench/protocol/error.hpp"

namespace tb::analytics {
namespace {

Milli pick(const ResultRow& row, Metric metric) {
  return metric == Metric::kScore ? row.score : row.sr;
}

}  // namespace

std::vector<ModelAverage> model_averages(const ResultsTable& table) {
  std::vector<ModelAverage> out;
  std::set<std::string> reference_tasks;
  bool first = true;
  for (const auto& model : table.models()) {
    std::vector<Milli> sr;
    std::vector<Milli> score;
    std::set<std::string> tasks;
    for (const auto& r : table.rows()) {
      if (r.model != model) continue;
      sr.push_back(r.sr);
      score.push_back(r.score);
      tasks.insert(r.task);
    }
    if (first) {
      reference_tasks = tasks;
      first = false;
    } else if (tasks != reference_tasks) {
      throw Error(ErrorCode::kInvalidArgument, "ragged table: model '" + model + "' covers a different task set");
    }
    out.push_back({model, mean_of(sr), mean_of(score)});
  }
  return out;
}

std::vector<CurvePoint> cumulative_distribution(const ResultsTable& table, const std::string& model,
                                                Metric metric) {
  if (!table.has_model(model)) throw Error(ErrorCode::kNotFound, "unknown model '" + model + "'");
  std::vector<CurvePoint> curve;
  for (const auto& r : table.rows()) {
    if (r.model == model) curve.push_back({r.task, pick(r, metric)});
  }
  std::sort(curve.begin(), curve.end(), [](const CurvePoint& a, const CurvePoint& b) {
    if (a.value != b.value) return a.value > b.value;
    return a.task < b.task;
  });
  return curve;
}

bool dominates(const ResultsTable& table, const std::string& a, const std::string& b, Metric metric) {
  const auto ca = cumulative_distribution(table, a, metric);
  const auto cb = cumulative_distribution(table, b, metric);
  if (ca.size() != cb.size()) {
    throw Error(ErrorCode::kInvalidArgument, "models cover different numbers of tasks");
  }
  for (std::size_t i = 0; i < ca.size(); ++i) {
    if (ca[i].value < cb[i].value) return false;
  }
  return true;
}

std::vector<TagAggregate> tag_aggregate(const ResultsTable& table, const TagMap& tags) {
  for (const auto& task : table.tasks()) {
    auto it = tags.find(task);
    if (it == tags.end() || it->second.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "task '" + task + "' has no tags");
    }
  }
  std::vector<TagAggregate> out;
  for (std::string_view tag : kTagVocabulary) {
    std::vector<Milli> sr;
    std::vector<Milli> score;
    std::set<std::string> tagged_tasks;
    for (const auto& r : table.rows()) {
      if (tags.at(r.task).count(std::string(tag)) == 0) continue;
      sr.push_back(r.sr);
      score.push_back(r.score);
      tagged_tasks.insert(r.task);
    }
    if (sr.empty()) continue;
    out.push_back({std::string(tag), static_cast<int>(tagged_tasks.size()), mean_of(sr), mean_of(score)});
  }
  return out;
}

TagAggregate global_aggregate(const ResultsTable& table) {
  std::vector<Milli> sr;
  std::vector<Milli> score;
  for (const auto& r : table.rows()) {
    sr.push_back(r.sr);
    score.push_back(r.score);
  }
  return {"all tasks", static_cast<int>(table.tasks().size()), mean_of(sr), mean_of(score)};
}

std::vector<RankEntry> ranklist(const ResultsTable& table) {
  std::map<std::pair<std::string, std::string>, std::pair<std::vector<Milli>, std::vector<Milli>>> groups;
  for (const auto& r : table.rows()) {
    auto& g = groups[{r.user, r.model}];
    g.first.push_back(r.sr);
    g.second.push_back(r.score);
  }
  std::vector<RankEntry> out;
  for (const auto& [key, values] : groups) {
    out.push_back({0, key.second, key.first, mean_of(values.first), mean_of(values.second), false});
  }
  std::sort(out.begin(), out.end(), [](const RankEntry& a, const RankEntry& b) {
    if (!(a.sr == b.sr)) return a.sr > b.sr;
    if (!(a.score == b.score)) return a.score > b.score;
    if (a.display_name != b.display_name) return a.display_name < b.display_name;
    return a.user < b.user;
  });
  for (std::size_t i = 0; i < out.size(); ++i) {
    const bool same_as_prev = i > 0 && out[i].sr == out[i - 1].sr && out[i].score == out[i - 1].score;
    out[i].rank = same_as_prev ? out[i - 1].rank : static_cast<int>(i) + 1;
    if (same_as_prev) {
      out[i].tied = true;
      out[i - 1].tied = true;
    }
  }
  return out;
}

}  // namespace tb::analytics
