#pragma once

// Study description (StudySpec) and its key = value config format.
//
//   # comment
//   study = strong            # lambda | wick | strong | weak | tuned
//   n_ladder = 8:64:x2        # or [8, 16, 32, 64]
//   alpha_rule = constant:1   # constant:A | kappa_log | list:a1,a2,... | tuned_gamma
//   damping_rule = constant:1 # constant:a | inv_log
//
// Unknown keys are errors so that typos never silently fall back to defaults.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdnlw {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class StudyKind { lambda_asymptotics, wick_decay, strong_triviality, weak_limit, tuned_damping };

inline std::string to_string(StudyKind k) {
  switch (k) {
    case StudyKind::lambda_asymptotics: return "lambda_asymptotics";
    case StudyKind::wick_decay: return "wick_decay";
    case StudyKind::strong_triviality: return "strong_triviality";
    case StudyKind::weak_limit: return "weak_limit";
    case StudyKind::tuned_damping: return "tuned_damping";
  }
  return "?";
}

inline StudyKind parse_study(const std::string& s) {
  if (s == "lambda" || s == "lambda_asymptotics") return StudyKind::lambda_asymptotics;
  if (s == "wick" || s == "wick_decay") return StudyKind::wick_decay;
  if (s == "strong" || s == "strong_triviality") return StudyKind::strong_triviality;
  if (s == "weak" || s == "weak_limit") return StudyKind::weak_limit;
  if (s == "tuned" || s == "tuned_damping") return StudyKind::tuned_damping;
  throw ConfigError("unknown study: " + s);
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& s, const std::string& what) {
  std::size_t pos = 0;
  double v;
  try {
    v = std::stod(trim(s), &pos);
  } catch (const std::exception&) {
    throw ConfigError("bad number for " + what + ": '" + s + "'");
  }
  if (pos != trim(s).size()) throw ConfigError("bad number for " + what + ": '" + s + "'");
  return v;
}

inline long parse_long(const std::string& s, const std::string& what) {
  const double v = parse_double(s, what);
  if (v != std::floor(v) || std::abs(v) > 9e15) throw ConfigError("expected an integer for " + what);
  return static_cast<long>(v);
}

/// "4:4096:x2" (geometric), "16:64:+16" (arithmetic), "[8, 16, 32]" or "8,16,32".
inline std::vector<int> parse_ladder(const std::string& text) {
  std::string s = trim(text);
  std::vector<int> out;
  if (!s.empty() && s.front() == '[') {
    if (s.back() != ']') throw ConfigError("unterminated ladder list");
    s = s.substr(1, s.size() - 2);
  }
  if (s.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(trim(p));
    if (parts.size() != 3 || parts[2].size() < 2) throw ConfigError("ladder must be start:stop:xF or start:stop:+D");
    const long a = parse_long(parts[0], "ladder start"), b = parse_long(parts[1], "ladder stop");
    const long f = parse_long(parts[2].substr(1), "ladder step");
    if (parts[2][0] == 'x') {
      if (f < 2 || a < 1) throw ConfigError("geometric ladder needs start >= 1 and factor >= 2");
      for (long n = a; n <= b; n *= f) out.push_back(static_cast<int>(n));
    } else if (parts[2][0] == '+') {
      if (f < 1) throw ConfigError("arithmetic ladder needs a positive step");
      for (long n = a; n <= b; n += f) out.push_back(static_cast<int>(n));
    } else {
      throw ConfigError("ladder step must start with x or +");
    }
  } else {
    std::stringstream ss(s);
    for (std::string p; std::getline(ss, p, ',');)
      if (!trim(p).empty()) out.push_back(static_cast<int>(parse_long(p, "ladder entry")));
  }
  if (out.empty()) throw ConfigError("empty N ladder");
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] < 2) throw ConfigError("ladder entries must be >= 2");
    if (i > 0 && out[i] <= out[i - 1]) throw ConfigError("ladder must be strictly increasing");
  }
  return out;
}

/// alpha_N as a function of N.
struct AlphaRule {
  enum Kind { constant, kappa_log, list, tuned_gamma } kind = constant;
  double value = 1.0;
  std::vector<double> values;

  static AlphaRule parse(const std::string& text) {
    const std::string s = trim(text);
    AlphaRule r;
    if (s.rfind("constant:", 0) == 0) {
      r.kind = constant;
      r.value = parse_double(s.substr(9), "alpha_rule");
    } else if (s == "kappa_log") {
      r.kind = kappa_log;
    } else if (s == "tuned_gamma") {
      r.kind = tuned_gamma;
    } else if (s.rfind("list:", 0) == 0) {
      r.kind = list;
      std::stringstream ss(s.substr(5));
      for (std::string p; std::getline(ss, p, ',');) r.values.push_back(parse_double(p, "alpha_rule list"));
      if (r.values.empty()) throw ConfigError("alpha_rule list is empty");
    } else {
      throw ConfigError("unknown alpha_rule: " + s);
    }
    return r;
  }

  std::string str() const {
    std::ostringstream o;
    o.precision(17);
    switch (kind) {
      case constant: o << "constant:" << value; break;
      case kappa_log: o << "kappa_log"; break;
      case tuned_gamma: o << "tuned_gamma"; break;
      case list:
        o << "list:";
        for (std::size_t i = 0; i < values.size(); ++i) o << (i ? "," : "") << values[i];
        break;
    }
    return o.str();
  }
};

/// Damping coefficient as a function of N.
struct DampingRule {
  enum Kind { constant, inv_log } kind = constant;
  double value = 1.0;

  static DampingRule parse(const std::string& text) {
    const std::string s = trim(text);
    DampingRule r;
    if (s.rfind("constant:", 0) == 0) {
      r.value = parse_double(s.substr(9), "damping_rule");
      if (!(r.value > 0.0)) throw ConfigError("damping must be > 0");
    } else if (s == "inv_log") {
      r.kind = inv_log;
    } else {
      throw ConfigError("unknown damping_rule: " + s);
    }
    return r;
  }
  double at(int N) const { return kind == constant ? value : 1.0 / std::log(static_cast<double>(N)); }
  std::string str() const {
    if (kind == inv_log) return "inv_log";
    std::ostringstream o;
    o.precision(17);
    o << "constant:" << value;
    return o.str();
  }
};

struct StudySpec {
  StudyKind study = StudyKind::strong_triviality;
  std::vector<int> n_ladder{8, 16, 32, 64};
  AlphaRule alpha_rule;
  DampingRule damping_rule;
  double kappa = 1.0;
  double gamma = 1.0;  // tuned study; +inf selects the trivial limit
  double T = 1.0;
  double h = 0.0;  // 0: default_step(N)
  double epsilon = 0.25;
  int mc_replicas = 64;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  std::string initial_data = "smooth_bump";
  double amplitude = 1.0;
  // weak study: mass-term discrimination run
  double compare_kappa = 2.0;
  int compare_n = 128;
  int compare_replicas = 32;
  // wick study sampling
  int time_samples = 11;
  int oversample = 2;
  // reference solution refinement (weak and tuned studies)
  int reference_refine = 2;

  /// alpha_N for the configured rule.
  double alpha_at(int N) const {
    const double logN = std::log(static_cast<double>(N));
    switch (alpha_rule.kind) {
      case AlphaRule::constant: return alpha_rule.value;
      case AlphaRule::kappa_log: return kappa / std::sqrt(logN);
      case AlphaRule::tuned_gamma: return std::sqrt(2.0 * gamma * gamma * damping_rule.at(N) / logN);
      case AlphaRule::list: {
        for (std::size_t i = 0; i < n_ladder.size(); ++i)
          if (n_ladder[i] == N && i < alpha_rule.values.size()) return alpha_rule.values[i];
        throw ConfigError("alpha_rule list has no entry for N = " + std::to_string(N));
      }
    }
    return 0.0;
  }

  void validate() const {
    if (n_ladder.empty()) throw ConfigError("empty N ladder");
    for (std::size_t i = 0; i < n_ladder.size(); ++i) {
      if (n_ladder[i] < 2) throw ConfigError("ladder entries must be >= 2");
      if (i > 0 && n_ladder[i] <= n_ladder[i - 1]) throw ConfigError("ladder must be strictly increasing");
    }
    if (alpha_rule.kind == AlphaRule::list && alpha_rule.values.size() != n_ladder.size())
      throw ConfigError("alpha_rule list length must match the ladder");
    if (!(T > 0.0)) throw ConfigError("T must be > 0");
    if (h < 0.0 || (h > 0.0 && h > T)) throw ConfigError("need 0 < h <= T (or h = 0 for the default)");
    if (mc_replicas < 1 || compare_replicas < 1) throw ConfigError("replica counts must be >= 1");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw ConfigError("epsilon must lie in (0, 1)");
    if (time_samples < 2 || oversample < 2) throw ConfigError("need time_samples >= 2 and oversample >= 2");
    if (reference_refine < 1) throw ConfigError("reference_refine must be >= 1");
    if (study == StudyKind::weak_limit && alpha_rule.kind != AlphaRule::kappa_log)
      throw ConfigError("weak study needs alpha_rule = kappa_log");
  }
};

inline std::string unquote(const std::string& s) {
  const std::string t = trim(s);
  if (t.size() >= 2 && ((t.front() == '"' && t.back() == '"') || (t.front() == '\'' && t.back() == '\'')))
    return t.substr(1, t.size() - 2);
  return t;
}

/// Strips comments that are not inside quotes.
inline std::string strip_comment(const std::string& line) {
  bool inq = false;
  char q = 0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (inq) {
      if (c == q) inq = false;
    } else if (c == '"' || c == '\'') {
      inq = true;
      q = c;
    } else if (c == '#') {
      return line.substr(0, i);
    }
  }
  return line;
}

inline StudySpec parse_study_spec(std::istream& in) {
  StudySpec s;
  std::map<std::string, bool> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string body = trim(strip_comment(line));
    if (body.empty()) continue;
    if (body.front() == '[' && body.find('=') == std::string::npos) continue;  // [section] headers are ignored
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(body.substr(0, eq));
    const std::string val = unquote(body.substr(eq + 1));
    if (seen[key]) throw ConfigError("duplicate key: " + key);
    seen[key] = true;
    if (key == "study") s.study = parse_study(val);
    else if (key == "n_ladder" || key == "N_ladder") s.n_ladder = parse_ladder(val);
    else if (key == "alpha_rule") s.alpha_rule = AlphaRule::parse(val);
    else if (key == "damping_rule") s.damping_rule = DampingRule::parse(val);
    else if (key == "kappa") s.kappa = parse_double(val, key);
    else if (key == "gamma") s.gamma = (val == "inf" ? std::numeric_limits<double>::infinity() : parse_double(val, key));
    else if (key == "T") s.T = parse_double(val, key);
    else if (key == "h") s.h = parse_double(val, key);
    else if (key == "epsilon") s.epsilon = parse_double(val, key);
    else if (key == "mc_replicas") s.mc_replicas = static_cast<int>(parse_long(val, key));
    else if (key == "seed") s.seed = static_cast<std::uint64_t>(std::stoull(val));
    else if (key == "output_dir") s.output_dir = val;
    else if (key == "initial_data") s.initial_data = val;
    else if (key == "amplitude") s.amplitude = parse_double(val, key);
    else if (key == "compare_kappa") s.compare_kappa = parse_double(val, key);
    else if (key == "compare_n") s.compare_n = static_cast<int>(parse_long(val, key));
    else if (key == "compare_replicas") s.compare_replicas = static_cast<int>(parse_long(val, key));
    else if (key == "time_samples") s.time_samples = static_cast<int>(parse_long(val, key));
    else if (key == "oversample") s.oversample = static_cast<int>(parse_long(val, key));
    else if (key == "reference_refine") s.reference_refine = static_cast<int>(parse_long(val, key));
    else throw ConfigError("unknown key: " + key);
  }
  s.validate();
  return s;
}

inline StudySpec parse_study_spec(const std::string& text) {
  std::istringstream in(text);
  return parse_study_spec(in);
}

inline StudySpec load_study_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  return parse_study_spec(in);
}

}  // namespace sdnlw
