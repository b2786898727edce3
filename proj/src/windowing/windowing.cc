#include "aflab/windowing/windowing.h"

#include <sstream>

#include "aflab/errors.h"

namespace aflab::windowing {

std::vector<TokenId> WindowSpec::tokens() const {
  std::vector<TokenId> out;
  out.reserve(windows.size());
  for (const Window& w : windows) out.push_back(w.token);
  return out;
}

WindowSpec PathToWindows(std::span<const TokenId> labels) {
  WindowSpec spec;
  spec.total_frames = static_cast<int>(labels.size());
  int window_start = 0;
  std::size_t t = 0;
  while (t < labels.size()) {
    if (labels[t] == ctc::kBlank) {
      ++t;
      continue;
    }
    const TokenId token = labels[t];
    std::size_t run_end = t;
    while (run_end < labels.size() && labels[run_end] == token) ++run_end;
    spec.windows.push_back({token, window_start, static_cast<int>(run_end)});
    window_start = static_cast<int>(run_end);
    t = run_end;
  }
  if (!spec.windows.empty()) spec.windows.back().end = spec.total_frames;
  return spec;
}

WindowSpec FixedWindows(int total_frames, int k) {
  if (k < 1) throw InputError("FixedWindows: window size must be >= 1");
  WindowSpec spec;
  spec.total_frames = total_frames;
  for (int s = 0; s < total_frames; s += k) spec.windows.push_back({0, s, std::min(s + k, total_frames)});
  return spec;
}

BoolMatrix WindowsToMask(const WindowSpec& spec) {
  BoolMatrix mask(spec.count(), spec.total_frames, false);
  for (int i = 0; i < spec.count(); ++i) {
    const Window& w = spec.windows[i];
    if (w.start < 0 || w.end > spec.total_frames || w.start > w.end) {
      throw InputError("WindowsToMask: window " + std::to_string(i) + " out of range");
    }
    for (int t = w.start; t < w.end; ++t) mask.Set(i, t, true);
  }
  return mask;
}

WindowSpec MaskToWindows(const BoolMatrix& mask, std::span<const TokenId> tokens) {
  if (static_cast<int>(tokens.size()) != mask.rows()) throw InputError("MaskToWindows: token count != mask rows");
  WindowSpec spec;
  spec.total_frames = mask.cols();
  for (int i = 0; i < mask.rows(); ++i) {
    int start = -1;
    int end = -1;
    for (int t = 0; t < mask.cols(); ++t) {
      if (!mask(i, t)) continue;
      if (start < 0) start = t;
      else if (end != t) throw InputError("MaskToWindows: row " + std::to_string(i) + " is not contiguous");
      end = t + 1;
    }
    if (start < 0) throw InputError("MaskToWindows: row " + std::to_string(i) + " is empty");
    spec.windows.push_back({tokens[i], start, end});
  }
  const std::string problem = CheckPartition(spec);
  if (!problem.empty()) throw InputError("MaskToWindows: " + problem);
  return spec;
}

std::string CheckPartition(const WindowSpec& spec) {
  if (spec.windows.empty()) return {};
  int expected = 0;
  for (std::size_t i = 0; i < spec.windows.size(); ++i) {
    const Window& w = spec.windows[i];
    if (w.start != expected) return "window " + std::to_string(i) + " starts at " + std::to_string(w.start) +
                                    ", expected " + std::to_string(expected);
    if (w.end <= w.start) return "window " + std::to_string(i) + " is empty";
    if (w.token == ctc::kBlank) return "window " + std::to_string(i) + " carries the blank token";
    expected = w.end;
  }
  if (expected != spec.total_frames) {
    return "windows cover [0, " + std::to_string(expected) + ") but T = " + std::to_string(spec.total_frames);
  }
  return {};
}

bool IsColumnPartition(const BoolMatrix& mask) {
  for (int t = 0; t < mask.cols(); ++t) {
    int hits = 0;
    for (int i = 0; i < mask.rows(); ++i) hits += mask(i, t) ? 1 : 0;
    if (hits != 1) return false;
  }
  return true;
}

double MeanWindowDurationMs(const WindowSpec& spec, double frame_ms) {
  if (spec.windows.empty()) throw InputError("token rate undefined: no windows");
  double total = 0.0;
  for (const Window& w : spec.windows) total += w.length() * frame_ms;
  return total / spec.count();
}

std::string FormatWindowLine(const std::string& utterance_id, const WindowSpec& spec) {
  std::ostringstream os;
  os << utterance_id;
  for (const Window& w : spec.windows) os << ' ' << w.token << ':' << w.start << '-' << w.end;
  return os.str();
}

std::pair<std::string, WindowSpec> ParseWindowLine(const std::string& line) {
  std::istringstream is(line);
  std::string id;
  if (!(is >> id)) throw FormatError("window line: missing utterance id");
  WindowSpec spec;
  std::string item;
  while (is >> item) {
    const auto colon = item.find(':');
    const auto dash = item.find('-', colon == std::string::npos ? 0 : colon);
    if (colon == std::string::npos || dash == std::string::npos) throw FormatError("window line: bad item '" + item + "'");
    Window w;
    try {
      w.token = std::stoi(item.substr(0, colon));
      w.start = std::stoi(item.substr(colon + 1, dash - colon - 1));
      w.end = std::stoi(item.substr(dash + 1));
    } catch (const std::exception&) {
      throw FormatError("window line: bad item '" + item + "'");
    }
    spec.windows.push_back(w);
  }
  spec.total_frames = spec.windows.empty() ? 0 : spec.windows.back().end;
  return {id, spec};
}

}  // namespace aflab::windowing
