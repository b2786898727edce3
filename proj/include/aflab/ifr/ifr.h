#pragma once

#include <optional>
#include <string>
#include <vector>

#include "aflab/compute/tensor.h"

namespace aflab::ifr {

struct DetectionRule {
  enum class Kind { kAnswerFormat, kTargetAlphabet, kExactRepeat };
  Kind kind = Kind::kAnswerFormat;
  std::string prefix;            // answer format
  std::string allowed;           // answer format: allowed answer characters
  std::string alphabet;          // target alphabet
  double min_fraction = 0.9;     // target alphabet
  std::string reference;         // exact repeat
  double tolerance = 0.0;        // exact repeat: max normalized edit distance
  bool case_sensitive = true;

  static DetectionRule AnswerFormat(std::string prefix, std::string allowed);
  static DetectionRule TargetAlphabet(std::string alphabet, double min_fraction = 0.9);
  static DetectionRule ExactRepeat(std::string reference, double tolerance);
};

struct Detection {
  bool followed = false;
  std::optional<std::string> answer;
  std::string reason;
};

Detection DetectFollowed(const std::string& response, const DetectionRule& rule);

// Levenshtein distance over characters.
int EditDistance(const std::string& a, const std::string& b);
// Edit distance divided by the reference length (1 when the reference is empty
// and the hypothesis is not).
double TokenErrorRate(const std::string& hypothesis, const std::string& reference);

struct SampleResult {
  std::string id;
  std::string task;
  std::string response;
  bool followed = false;
  bool correct = false;  // meaningful only when followed
  std::string reason;
};

struct TaskReport {
  std::string task;
  int n_total = 0;
  int n_followed = 0;
  double ifr = 0.0;
  std::optional<double> accuracy;  // over followed samples; absent when none followed
};

struct IfrReport {
  std::vector<TaskReport> tasks;  // sorted by task name
  double macro_ifr = 0.0;
  std::vector<SampleResult> trace;  // in input order
  const TaskReport* Find(const std::string& task) const;
};

IfrReport ComputeIfr(const std::vector<SampleResult>& results);

struct CosineSummary {
  double mean = 0.0;
  int rows = 0;
  int excluded = 0;  // zero-norm rows
};

// Mean cosine similarity of paired rows. Throws DimensionError on shape mismatch.
CosineSummary CosineReport(const Tensor& a, const Tensor& text);
// Row-weighted mean over utterances.
CosineSummary MergeCosine(const std::vector<CosineSummary>& parts);

// One table row per (preset, task) plus the macro IFR and the optional ASR
// token error.
struct PresetResult {
  std::string preset;
  IfrReport report;
  std::optional<double> asr_ter;
  int asr_n = 0;
};

struct TableRow {
  std::string preset;
  std::string task;
  std::string metric_name;
  std::optional<double> metric_value;
  std::optional<double> ifr;
  int n_total = 0;
  int n_followed = 0;
};

std::vector<TableRow> TableRows(const std::vector<PresetResult>& results);
std::string FormatCsv(const std::vector<TableRow>& rows);
std::vector<TableRow> ParseCsv(const std::string& csv);
std::string FormatText(const std::vector<TableRow>& rows);
// Line-delimited JSON records (id, task, response, followed, reason).
std::string FormatTrace(const IfrReport& report);

}  // namespace aflab::ifr
