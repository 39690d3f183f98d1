// Copyright 2026 The FRMD Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "frmd/run_config.h"

#include <zlib.h>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "frmd/errors.h"

namespace frmd {
namespace {

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> SplitList(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item = Trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

[[noreturn]] void Bad(const std::string& key, const std::string& value,
                      const std::string& expected) {
  throw ConfigError("bad value '" + value + "' for " + key + " (expected " +
                    expected + ")");
}

int64_t ToInt(const std::string& key, const std::string& v) {
  int64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) Bad(key, v, "integer");
  return out;
}

uint64_t ToU64(const std::string& key, const std::string& v) {
  uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    Bad(key, v, "unsigned integer");
  }
  return out;
}

double ToDouble(const std::string& key, const std::string& v) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) {
    Bad(key, v, "finite number");
  }
  return out;
}

bool ToBool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  Bad(key, v, "true|false");
}

std::string Num(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

template <typename T>
std::string JoinNums(const std::vector<T>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

std::string Join(const std::vector<std::string>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += v[i];
  }
  return out;
}

// Converts module parse errors into errors naming the key.
template <typename F>
auto Named(const std::string& key, F&& parse) {
  try {
    return parse();
  } catch (const ConfigError& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

struct Entry {
  std::string key;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define FRMD_INT(KEY, FIELD)                                                 \
  Entry {                                                                    \
    KEY,                                                                     \
        [](RunConfig& c, const std::string& k, const std::string& v) {       \
          c.FIELD = static_cast<decltype(c.FIELD)>(ToInt(k, v));             \
        },                                                                   \
        [](const RunConfig& c) { return std::to_string(c.FIELD); }           \
  }
#define FRMD_U64(KEY, FIELD)                                                 \
  Entry {                                                                    \
    KEY,                                                                     \
        [](RunConfig& c, const std::string& k, const std::string& v) {       \
          c.FIELD = ToU64(k, v);                                             \
        },                                                                   \
        [](const RunConfig& c) { return std::to_string(c.FIELD); }           \
  }
#define FRMD_DBL(KEY, FIELD)                                                 \
  Entry {                                                                    \
    KEY,                                                                     \
        [](RunConfig& c, const std::string& k, const std::string& v) {       \
          c.FIELD = ToDouble(k, v);                                          \
        },                                                                   \
        [](const RunConfig& c) { return Num(c.FIELD); }                      \
  }
#define FRMD_BOOL(KEY, FIELD)                                                \
  Entry {                                                                    \
    KEY,                                                                     \
        [](RunConfig& c, const std::string& k, const std::string& v) {       \
          c.FIELD = ToBool(k, v);                                            \
        },                                                                   \
        [](const RunConfig& c) {                                             \
          return std::string(c.FIELD ? "true" : "false");                    \
        }                                                                    \
  }
#define FRMD_STR(KEY, FIELD)                                                 \
  Entry {                                                                    \
    KEY,                                                                     \
        [](RunConfig& c, const std::string&, const std::string& v) {         \
          c.FIELD = v;                                                       \
        },                                                                   \
        [](const RunConfig& c) { return c.FIELD; }                           \
  }
#define FRMD_ENUM(KEY, FIELD, PARSE)                                         \
  Entry {                                                                    \
    KEY,                                                                     \
        [](RunConfig& c, const std::string& k, const std::string& v) {       \
          c.FIELD = Named(k, [&] { return PARSE(v); });                      \
        },                                                                   \
        [](const RunConfig& c) { return ToString(c.FIELD); }                 \
  }

const std::vector<Entry>& Entries() {
  using consistency::ParseCOutMode;
  using consistency::ParseMetric;
  using consistency::ParseWeighting;
  using consistency::ToString;
  using diffusion::ParseLossWeighting;
  using diffusion::ParseSolver;
  using diffusion::ToString;
  using envs::ParseTaskKind;
  using envs::ToString;
  using nn::ParseHeadMode;
  using nn::ToString;
  static const std::vector<Entry> entries = {
      FRMD_U64("seed", seed),
      FRMD_STR("out", out),

      FRMD_INT("mp.dof", mp.dof),
      FRMD_INT("mp.n_basis", mp.n_basis),
      FRMD_DBL("mp.alpha", mp.alpha),
      FRMD_DBL("mp.tau_s", mp.tau_s),
      FRMD_DBL("mp.alpha_x", mp.alpha_x),
      FRMD_INT("mp.grid_points", mp.grid_points),
      FRMD_DBL("mp.basis_width", mp.basis_width),
      FRMD_INT("mp.quad_substeps", mp.quad_substeps),

      FRMD_INT("schedule.n", schedule.n),
      FRMD_DBL("schedule.epsilon", schedule.epsilon),
      FRMD_DBL("schedule.t_max", schedule.t_max),
      FRMD_DBL("schedule.rho", schedule.rho),

      FRMD_ENUM("teacher.head", teacher.head, ParseHeadMode),
      Entry{"teacher.hidden",
            [](RunConfig& c, const std::string& k, const std::string& v) {
              c.teacher.train.hidden.clear();
              for (const auto& item : SplitList(v)) {
                c.teacher.train.hidden.push_back(
                    static_cast<int>(ToInt(k, item)));
              }
            },
            [](const RunConfig& c) { return JoinNums(c.teacher.train.hidden); }},
      FRMD_INT("teacher.embed_size", teacher.train.embed_size),
      FRMD_DBL("teacher.sigma_data", teacher.train.sigma_data),
      FRMD_INT("teacher.steps", teacher.train.steps),
      FRMD_INT("teacher.batch_size", teacher.train.batch_size),
      FRMD_INT("teacher.log_every", teacher.train.log_every),
      FRMD_INT("teacher.validation_size", teacher.train.validation_size),
      FRMD_ENUM("teacher.weighting", teacher.train.weighting,
                ParseLossWeighting),
      FRMD_DBL("teacher.weight_sigma", teacher.train.weight_sigma),
      FRMD_DBL("teacher.lr", teacher.train.optimizer.lr),
      FRMD_DBL("teacher.beta1", teacher.train.optimizer.beta1),
      FRMD_DBL("teacher.beta2", teacher.train.optimizer.beta2),
      FRMD_DBL("teacher.adam_eps", teacher.train.optimizer.eps),
      FRMD_DBL("teacher.weight_decay", teacher.train.optimizer.weight_decay),
      FRMD_INT("teacher.warmup_steps", teacher.train.optimizer.warmup_steps),
      FRMD_DBL("teacher.clip_norm", teacher.train.optimizer.clip_norm),
      FRMD_BOOL("teacher.train_raw", teacher.train_raw),
      FRMD_INT("teacher.sample_steps", teacher.sample_steps),
      FRMD_ENUM("teacher.solver", teacher.solver, ParseSolver),

      FRMD_INT("distill.k", distill.consistency.k),
      FRMD_DBL("distill.mu", distill.consistency.mu),
      FRMD_DBL("distill.gamma_d", distill.consistency.gamma_d),
      FRMD_DBL("distill.beta", distill.consistency.beta),
      FRMD_ENUM("distill.c_out", distill.consistency.c_out, ParseCOutMode),
      FRMD_ENUM("distill.metric", distill.consistency.metric, ParseMetric),
      FRMD_ENUM("distill.weighting", distill.consistency.weighting,
                ParseWeighting),
      FRMD_INT("distill.steps", distill.consistency.steps),
      FRMD_BOOL("distill.deploy_target", distill.consistency.deploy_target),
      FRMD_INT("distill.batch_size", distill.batch_size),
      FRMD_INT("distill.log_every", distill.log_every),
      FRMD_DBL("distill.lr", distill.optimizer.lr),
      FRMD_DBL("distill.beta1", distill.optimizer.beta1),
      FRMD_DBL("distill.beta2", distill.optimizer.beta2),
      FRMD_DBL("distill.adam_eps", distill.optimizer.eps),
      FRMD_DBL("distill.weight_decay", distill.optimizer.weight_decay),
      FRMD_INT("distill.warmup_steps", distill.optimizer.warmup_steps),
      FRMD_DBL("distill.clip_norm", distill.optimizer.clip_norm),
      FRMD_ENUM("distill.teacher_solver", distill.teacher_solver, ParseSolver),

      FRMD_ENUM("env.task", task, ParseTaskKind),
      FRMD_INT("env.demos", demos),
      FRMD_U64("env.demo_seed_offset", demo_seed_offset),
      FRMD_DBL("env.success_radius", env.success_radius),
      FRMD_DBL("env.via_radius", env.via_radius),
      FRMD_INT("env.max_steps", env.max_steps),
      FRMD_DBL("env.min_separation", env.min_separation),
      FRMD_DBL("env.workspace_margin", env.workspace_margin),
      FRMD_DBL("env.plant_gain", env.plant_gain),
      FRMD_DBL("env.dt", env.dt),
      FRMD_INT("env.horizon", env.horizon),
      FRMD_INT("env.obs_window", env.obs_window),
      FRMD_INT("env.replan_every", env.replan_every),
      FRMD_INT("env.reach_steps", env.reach_steps),
      FRMD_INT("env.via_steps", env.via_steps),
      FRMD_DBL("env.bimodal_offset", env.bimodal_offset),

      Entry{"eval.seeds",
            [](RunConfig& c, const std::string& k, const std::string& v) {
              c.eval.seeds.clear();
              for (const auto& item : SplitList(v)) {
                c.eval.seeds.push_back(ToU64(k, item));
              }
            },
            [](const RunConfig& c) { return JoinNums(c.eval.seeds); }},
      FRMD_INT("eval.episodes", eval.episodes),
      FRMD_DBL("eval.k_max", eval.k_max),
      FRMD_DBL("eval.min_segment", eval.min_segment),
      FRMD_INT("eval.bench_reps", eval.bench_reps),
      FRMD_U64("eval.task_offset", eval.task_offset),
      Entry{"eval.policies",
            [](RunConfig& c, const std::string&, const std::string& v) {
              c.eval.policies = SplitList(v);
            },
            [](const RunConfig& c) { return Join(c.eval.policies); }},
      FRMD_BOOL("eval.write_traces", eval.write_traces),

      FRMD_STR("plot.trace", plot.trace),
      FRMD_STR("plot.report", plot.report),
      FRMD_STR("plot.output", plot.output),
  };
  return entries;
}

#undef FRMD_INT
#undef FRMD_U64
#undef FRMD_DBL
#undef FRMD_BOOL
#undef FRMD_STR
#undef FRMD_ENUM

const Entry& Find(const std::string& key) {
  for (const Entry& e : Entries()) {
    if (e.key == key) return e;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

void Require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

void RunConfig::Validate() const {
  Named("mp", [&] { mp.Validate(); return 0; });
  Require(mp.dof == envs::kActionDim,
          "mp.dof must equal the action dimension (2)");
  Require(schedule.n >= 2, "schedule.n must be at least 2");
  Require(schedule.epsilon > 0 && schedule.t_max > schedule.epsilon,
          "schedule needs 0 < epsilon < t_max");
  Require(schedule.rho > 0, "schedule.rho must be positive");

  const auto& t = teacher.train;
  Require(!t.hidden.empty(), "teacher.hidden needs at least one layer");
  for (int h : t.hidden) Require(h > 0, "teacher.hidden sizes must be positive");
  Require(t.embed_size > 0 && t.embed_size % 2 == 0,
          "teacher.embed_size must be positive and even");
  Require(t.sigma_data > 0, "teacher.sigma_data must be positive");
  Require(t.steps >= 0, "teacher.steps must be non-negative");
  Require(t.batch_size > 0, "teacher.batch_size must be positive");
  Require(t.log_every > 0, "teacher.log_every must be positive");
  Require(t.validation_size > 0, "teacher.validation_size must be positive");
  Require(t.weight_sigma >= 0, "teacher.weight_sigma must be non-negative");
  Require(t.optimizer.lr > 0, "teacher.lr must be positive");
  Require(t.optimizer.warmup_steps >= 0, "teacher.warmup_steps must be >= 0");
  Require(t.optimizer.clip_norm >= 0, "teacher.clip_norm must be >= 0");
  Require(teacher.sample_steps >= 1 && teacher.sample_steps < schedule.n,
          "teacher.sample_steps must be in [1, schedule.n)");

  Named("distill", [&] {
    distill.consistency.Validate(schedule.n);
    return 0;
  });
  Require(distill.batch_size > 0, "distill.batch_size must be positive");
  Require(distill.log_every > 0, "distill.log_every must be positive");
  Require(distill.optimizer.lr > 0, "distill.lr must be positive");
  Require(distill.optimizer.warmup_steps >= 0,
          "distill.warmup_steps must be >= 0");
  Require(distill.optimizer.clip_norm >= 0, "distill.clip_norm must be >= 0");

  Named("env", [&] { env.Validate(); return 0; });
  Require(std::abs(env.dt * env.horizon - mp.tau_s) < 1e-9,
          "env.dt * env.horizon must equal mp.tau_s");
  Require(demos > 0, "env.demos must be positive");

  Require(!eval.seeds.empty(), "eval.seeds must not be empty");
  Require(std::set<uint64_t>(eval.seeds.begin(), eval.seeds.end()).size() ==
              eval.seeds.size(),
          "eval.seeds must be distinct");
  Require(eval.episodes > 0, "eval.episodes must be positive");
  Require(eval.k_max > 0, "eval.k_max must be positive");
  Require(eval.min_segment >= 0, "eval.min_segment must be non-negative");
  Require(eval.bench_reps >= 10, "eval.bench_reps must be at least 10");
  Require(!eval.policies.empty(), "eval.policies must not be empty");
  for (const auto& p : eval.policies) {
    Require(p == "teacher" || p == "student" || p == "raw" || p == "expert",
            "eval.policies entries must be teacher|student|raw|expert, got '" +
                p + "'");
  }
  Require(!out.empty(), "out must not be empty");
}

std::vector<std::string> ConfigKeys() {
  std::vector<std::string> keys;
  for (const Entry& e : Entries()) keys.push_back(e.key);
  return keys;
}

void SetConfigValue(RunConfig& config, const std::string& key,
                    const std::string& value) {
  Find(key).set(config, key, value);
}

std::string GetConfigValue(const RunConfig& config, const std::string& key) {
  return Find(key).get(config);
}

RunConfig ParseRunConfig(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  std::set<std::string> seen;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) +
                        ": expected key = value");
    }
    const std::string key = Trim(line.substr(0, eq));
    const std::string value = Trim(line.substr(eq + 1));
    if (!seen.insert(key).second) {
      throw ConfigError("line " + std::to_string(line_no) + ": key '" + key +
                        "' repeated");
    }
    try {
      SetConfigValue(base, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

RunConfig LoadRunConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return ParseRunConfig(buf.str());
}

std::string ResolvedConfigText(const RunConfig& config) {
  std::string out;
  for (const Entry& e : Entries()) out += e.key + " = " + e.get(config) + "\n";
  return out;
}

std::string ConfigHash(const RunConfig& config) {
  const std::string text = ResolvedConfigText(config);
  const uLong crc = crc32(0L, reinterpret_cast<const Bytef*>(text.data()),
                          static_cast<uInt>(text.size()));
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%08lx", static_cast<unsigned long>(crc));
  return buf;
}

diffusion::NoiseSchedule MakeSchedule(const RunConfig& config) {
  return diffusion::KarrasLevels(config.schedule.n, config.schedule.epsilon,
                                 config.schedule.t_max, config.schedule.rho);
}

int ObsSize(const RunConfig& config) {
  return config.env.obs_window * envs::kObsDim;
}

}  // namespace frmd
