#include "aflab/ifr/ifr.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

#include <json.hpp>

#include "aflab/errors.h"

namespace aflab::ifr {

namespace {

char Fold(char c, bool case_sensitive) {
  return case_sensitive ? c : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
}

std::string FormatNumber(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << *v;
  return os.str();
}

std::optional<double> ParseNumber(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::stod(s);
}

}  // namespace

DetectionRule DetectionRule::AnswerFormat(std::string prefix, std::string allowed) {
  DetectionRule r;
  r.kind = Kind::kAnswerFormat;
  r.prefix = std::move(prefix);
  r.allowed = std::move(allowed);
  return r;
}

DetectionRule DetectionRule::TargetAlphabet(std::string alphabet, double min_fraction) {
  DetectionRule r;
  r.kind = Kind::kTargetAlphabet;
  r.alphabet = std::move(alphabet);
  r.min_fraction = min_fraction;
  return r;
}

DetectionRule DetectionRule::ExactRepeat(std::string reference, double tolerance) {
  DetectionRule r;
  r.kind = Kind::kExactRepeat;
  r.reference = std::move(reference);
  r.tolerance = tolerance;
  return r;
}

Detection DetectFollowed(const std::string& response, const DetectionRule& rule) {
  Detection d;
  const bool cs = rule.case_sensitive;
  std::string resp = response;
  for (char& c : resp) c = Fold(c, cs);
  switch (rule.kind) {
    case DetectionRule::Kind::kAnswerFormat: {
      std::string prefix = rule.prefix;
      for (char& c : prefix) c = Fold(c, cs);
      const std::size_t at = resp.find(prefix);
      if (at == std::string::npos) {
        d.reason = "answer prefix missing";
        return d;
      }
      const std::size_t next = at + prefix.size();
      if (next >= response.size()) {
        d.reason = "nothing after answer prefix";
        return d;
      }
      const char answer = response[next];
      bool ok = false;
      for (char a : rule.allowed) ok = ok || Fold(a, cs) == Fold(answer, cs);
      if (!ok) {
        d.reason = std::string("answer '") + answer + "' not in {" + rule.allowed + "}";
        return d;
      }
      d.followed = true;
      d.answer = std::string(1, answer);
      d.reason = "answer format matched";
      return d;
    }
    case DetectionRule::Kind::kTargetAlphabet: {
      int total = 0, inside = 0;
      for (char c : response) {
        if (c == ' ') continue;
        ++total;
        for (char a : rule.alphabet) {
          if (Fold(a, cs) == Fold(c, cs)) {
            ++inside;
            break;
          }
        }
      }
      const double frac = total == 0 ? 0.0 : static_cast<double>(inside) / total;
      d.followed = total > 0 && frac >= rule.min_fraction;
      std::ostringstream os;
      os << "target alphabet fraction " << std::fixed << std::setprecision(2) << frac;
      d.reason = os.str();
      if (d.followed) d.answer = response;
      return d;
    }
    case DetectionRule::Kind::kExactRepeat: {
      std::string ref = rule.reference;
      for (char& c : ref) c = Fold(c, cs);
      const double ter = TokenErrorRate(resp, ref);
      d.followed = ter <= rule.tolerance;
      std::ostringstream os;
      os << "normalized edit distance " << std::fixed << std::setprecision(2) << ter;
      d.reason = os.str();
      if (d.followed) d.answer = response;
      return d;
    }
  }
  return d;
}

int EditDistance(const std::string& a, const std::string& b) {
  std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double TokenErrorRate(const std::string& hypothesis, const std::string& reference) {
  if (reference.empty()) return hypothesis.empty() ? 0.0 : 1.0;
  return static_cast<double>(EditDistance(hypothesis, reference)) / reference.size();
}

const TaskReport* IfrReport::Find(const std::string& task) const {
  for (const TaskReport& t : tasks)
    if (t.task == task) return &t;
  return nullptr;
}

IfrReport ComputeIfr(const std::vector<SampleResult>& results) {
  IfrReport report;
  report.trace = results;
  std::map<std::string, std::pair<TaskReport, int>> by_task;  // task -> (report, correct)
  for (const SampleResult& r : results) {
    auto& [t, correct] = by_task[r.task];
    t.task = r.task;
    ++t.n_total;
    if (r.followed) {
      ++t.n_followed;
      if (r.correct) ++correct;
    }
  }
  double sum = 0.0;
  for (auto& [name, entry] : by_task) {
    TaskReport t = entry.first;
    t.ifr = static_cast<double>(t.n_followed) / t.n_total;
    if (t.n_followed > 0) t.accuracy = static_cast<double>(entry.second) / t.n_followed;
    sum += t.ifr;
    report.tasks.push_back(t);
  }
  report.macro_ifr = report.tasks.empty() ? 0.0 : sum / report.tasks.size();
  return report;
}

CosineSummary CosineReport(const Tensor& a, const Tensor& text) {
  if (!a.SameShape(text)) throw DimensionError("cosine_report: " + a.ShapeString() + " vs " + text.ShapeString());
  CosineSummary s;
  double sum = 0.0;
  for (int r = 0; r < a.rows(); ++r) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int c = 0; c < a.cols(); ++c) {
      dot += a(r, c) * text(r, c);
      na += a(r, c) * a(r, c);
      nb += text(r, c) * text(r, c);
    }
    if (na == 0.0 || nb == 0.0) {
      ++s.excluded;
      continue;
    }
    sum += dot / std::sqrt(na * nb);
    ++s.rows;
  }
  s.mean = s.rows > 0 ? sum / s.rows : 0.0;
  return s;
}

CosineSummary MergeCosine(const std::vector<CosineSummary>& parts) {
  CosineSummary out;
  double sum = 0.0;
  for (const CosineSummary& p : parts) {
    sum += p.mean * p.rows;
    out.rows += p.rows;
    out.excluded += p.excluded;
  }
  out.mean = out.rows > 0 ? sum / out.rows : 0.0;
  return out;
}

std::vector<TableRow> TableRows(const std::vector<PresetResult>& results) {
  std::vector<TableRow> rows;
  for (const PresetResult& pr : results) {
    int total = 0, followed = 0;
    for (const TaskReport& t : pr.report.tasks) {
      rows.push_back({pr.preset, t.task, "accuracy", t.accuracy, t.ifr, t.n_total, t.n_followed});
      total += t.n_total;
      followed += t.n_followed;
    }
    if (!pr.report.tasks.empty())
      rows.push_back({pr.preset, "macro", "macro_ifr", pr.report.macro_ifr, pr.report.macro_ifr, total, followed});
    if (pr.asr_ter) rows.push_back({pr.preset, "asr", "token_error", pr.asr_ter, std::nullopt, pr.asr_n, 0});
  }
  return rows;
}

std::string FormatCsv(const std::vector<TableRow>& rows) {
  std::ostringstream os;
  os << "preset,task,metric_name,metric_value,ifr,n_total,n_followed\n";
  for (const TableRow& r : rows)
    os << r.preset << ',' << r.task << ',' << r.metric_name << ',' << FormatNumber(r.metric_value) << ','
       << FormatNumber(r.ifr) << ',' << r.n_total << ',' << r.n_followed << '\n';
  return os.str();
}

std::vector<TableRow> ParseCsv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != "preset,task,metric_name,metric_value,ifr,n_total,n_followed")
    throw FormatError("results csv: unexpected header");
  std::vector<TableRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 7) throw FormatError("results csv: expected 7 fields in '" + line + "'");
    rows.push_back({f[0], f[1], f[2], ParseNumber(f[3]), ParseNumber(f[4]), std::stoi(f[5]), std::stoi(f[6])});
  }
  return rows;
}

std::string FormatText(const std::vector<TableRow>& rows) {
  const std::vector<std::string> header = {"preset", "task", "metric", "value", "ifr", "n_total", "n_followed"};
  std::vector<std::vector<std::string>> cells = {header};
  for (const TableRow& r : rows)
    cells.push_back({r.preset, r.task, r.metric_name, r.metric_value ? FormatNumber(r.metric_value) : "-",
                     r.ifr ? FormatNumber(r.ifr) : "-", std::to_string(r.n_total), std::to_string(r.n_followed)});
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : cells)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::ostringstream os;
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c > 0) os << "  ";
      os << std::left << std::setw(static_cast<int>(width[c])) << row[c];
    }
    os << '\n';
  }
  return os.str();
}

std::string FormatTrace(const IfrReport& report) {
  std::ostringstream os;
  for (const SampleResult& r : report.trace) {
    nlohmann::json j = {{"id", r.id},
                        {"task", r.task},
                        {"response", r.response},
                        {"followed", r.followed},
                        {"correct", r.correct},
                        {"reason", r.reason}};
    os << j.dump() << '\n';
  }
  return os.str();
}

}  // namespace aflab::ifr
