#pragma once

#include <string>
#include <vector>

#include "tablebench/analytics/results.hpp"

namespace tb::analytics {

struct ModelAverage {
  std::string model;
  Rational sr;
  Rational score;
};

// Mean SR and score per model over its tasks. Every model must cover the
// same task set.
std::vector<ModelAverage> model_averages(const ResultsTable& table);

struct CurvePoint {
  std::string task;
  Milli value = 0;
};

// One model's metric values sorted descending (ties by task name).
std::vector<CurvePoint> cumulative_distribution(const ResultsTable& table, const std::string& model,
                                                Metric metric);

// True when `a`'s sorted curve is at least `b`'s at every rank.
bool dominates(const ResultsTable& table, const std::string& a, const std::string& b, Metric metric);

struct TagAggregate {
  std::string tag;
  int task_count = 0;
  Rational sr;
  Rational score;
};

// Mean over every (model, task) cell whose task carries each tag. Tags with
// no tasks are omitted. Every task in the table must be tagged.
std::vector<TagAggregate> tag_aggregate(const ResultsTable& table, const TagMap& tags);

// Mean over every cell of the table.
TagAggregate global_aggregate(const ResultsTable& table);

struct RankEntry {
  int rank = 0;  // shared by tied entries (1, 1, 3, ...)
  std::string display_name;
  std::string user;
  Rational sr;
  Rational score;
  bool tied = false;
};

// Groups rows by (user, display name), averages them, and orders by mean SR
// then mean score. Entries with equal SR and score share a rank.
std::vector<RankEntry> ranklist(const ResultsTable& table);

}  // namespace tb::analytics
