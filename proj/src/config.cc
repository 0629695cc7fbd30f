/*
 * Copyright 2026 The fedtalk Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include "fedtalk/config.h"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>
#include <vector>

#include "absl/strings/ascii.h"
#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "fedtalk/binary_io.h"

namespace fedtalk {
namespace {

absl::string_view AsAbsl(std::string_view s) {
  return absl::string_view(s.data(), s.size());
}

struct Field {
  std::string section;  // empty for top-level keys
  std::string key;
  std::function<absl::Status(ExperimentConfig&, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;

  std::string name() const {
    return section.empty() ? key : absl::StrCat(section, ".", key);
  }
};

std::string FormatDouble(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

absl::Status ParseValue(std::string_view text, int& out) {
  if (!absl::SimpleAtoi(AsAbsl(text), &out)) {
    return absl::InvalidArgumentError(
        absl::StrCat("expected an integer, got '", std::string(text), "'"));
  }
  return absl::OkStatus();
}

absl::Status ParseValue(std::string_view text, uint64_t& out) {
  if (!absl::SimpleAtoi(AsAbsl(text), &out)) {
    return absl::InvalidArgumentError(absl::StrCat(
        "expected an unsigned integer, got '", std::string(text), "'"));
  }
  return absl::OkStatus();
}

absl::Status ParseValue(std::string_view text, double& out) {
  if (!absl::SimpleAtod(AsAbsl(text), &out) || !std::isfinite(out)) {
    return absl::InvalidArgumentError(
        absl::StrCat("expected a finite number, got '", std::string(text), "'"));
  }
  return absl::OkStatus();
}

absl::Status ParseValue(std::string_view text, bool& out) {
  if (!absl::SimpleAtob(AsAbsl(text), &out)) {
    return absl::InvalidArgumentError(
        absl::StrCat("expected a boolean, got '", std::string(text), "'"));
  }
  return absl::OkStatus();
}

absl::Status ParseValue(std::string_view text, std::string& out) {
  out = std::string(text);
  return absl::OkStatus();
}

absl::Status ParseValue(std::string_view text, Strategy& out) {
  absl::StatusOr<Strategy> s = ParseStrategy(text);
  if (!s.ok()) return s.status();
  out = *s;
  return absl::OkStatus();
}

std::string Format(int v) { return absl::StrCat(v); }
std::string Format(uint64_t v) { return absl::StrCat(v); }
std::string Format(double v) { return FormatDouble(v); }
std::string Format(bool v) { return v ? "true" : "false"; }
std::string Format(const std::string& v) { return v; }
std::string Format(Strategy v) { return StrategyName(v); }

template <typename Accessor>
Field MakeField(std::string section, std::string key, Accessor access) {
  Field f;
  f.section = std::move(section);
  f.key = std::move(key);
  f.set = [access](ExperimentConfig& c, std::string_view text) {
    return ParseValue(text, access(c));
  };
  f.get = [access](const ExperimentConfig& c) {
    return Format(access(const_cast<ExperimentConfig&>(c)));
  };
  return f;
}

#define FEDTALK_FIELD(section, key, expr) \
  MakeField(section, key, [](ExperimentConfig& c) -> auto& { return expr; })

const std::vector<Field>& Fields() {
  static const std::vector<Field>* fields = new std::vector<Field>{
      FEDTALK_FIELD("", "seed", c.seed),
      FEDTALK_FIELD("", "out", c.out_dir),

      FEDTALK_FIELD("world", "num_clients", c.world.num_clients),
      FEDTALK_FIELD("world", "identities_per_client",
                    c.world.identities_per_client),
      FEDTALK_FIELD("world", "clips_per_client", c.world.clips_per_client),
      FEDTALK_FIELD("world", "frames", c.world.frames),
      FEDTALK_FIELD("world", "latent_dim", c.world.latent_dim),
      FEDTALK_FIELD("world", "cond_dim", c.world.cond_dim),
      FEDTALK_FIELD("world", "identity_dim", c.world.identity_dim),
      FEDTALK_FIELD("world", "data_noise", c.world.data_noise),
      FEDTALK_FIELD("world", "motion_scale", c.world.motion_scale),
      FEDTALK_FIELD("world", "cond_smoothness", c.world.cond_smoothness),
      FEDTALK_FIELD("world", "appearance_scale", c.world.appearance_scale),
      FEDTALK_FIELD("world", "unreliable_fraction",
                    c.world.unreliable_fraction),
      FEDTALK_FIELD("world", "validation_fraction",
                    c.world.validation_fraction),
      FEDTALK_FIELD("world", "public_identities", c.world.public_identities),
      FEDTALK_FIELD("world", "public_clips", c.world.public_clips),

      FEDTALK_FIELD("schedule", "steps", c.schedule.steps),
      FEDTALK_FIELD("schedule", "beta_start", c.schedule.beta_start),
      FEDTALK_FIELD("schedule", "beta_end", c.schedule.beta_end),

      FEDTALK_FIELD("model", "time_embed_dim", c.model.time_embed_dim),
      FEDTALK_FIELD("model", "hidden_dim", c.model.hidden_dim),
      FEDTALK_FIELD("model", "adapter_rank", c.model.adapter_rank),
      FEDTALK_FIELD("model", "perceptual_dim", c.model.perceptual_dim),
      FEDTALK_FIELD("model", "pretrain_steps", c.model.pretrain.steps),
      FEDTALK_FIELD("model", "pretrain_batch_size",
                    c.model.pretrain.batch_size),
      FEDTALK_FIELD("model", "pretrain_learning_rate",
                    c.model.pretrain.learning_rate),

      FEDTALK_FIELD("local", "epochs", c.federation.local.local_epochs),
      FEDTALK_FIELD("local", "batch_size", c.federation.local.batch_size),
      FEDTALK_FIELD("local", "learning_rate",
                    c.federation.local.learning_rate),
      FEDTALK_FIELD("local", "prox_mu", c.federation.local.prox_mu),
      FEDTALK_FIELD("local", "lambda_tdc", c.federation.local.weights.tdc),
      FEDTALK_FIELD("local", "lambda_identity",
                    c.federation.local.weights.identity),
      FEDTALK_FIELD("local", "lambda_perceptual",
                    c.federation.local.weights.perceptual),
      FEDTALK_FIELD("local", "lambda_sync", c.federation.local.weights.sync),

      FEDTALK_FIELD("federation", "rounds", c.federation.num_rounds),
      FEDTALK_FIELD("federation", "client_fraction",
                    c.federation.client_fraction),
      FEDTALK_FIELD("federation", "strategy", c.federation.strategy),
      FEDTALK_FIELD("federation", "gamma", c.federation.gamma),
      FEDTALK_FIELD("federation", "eta", c.federation.eta),
      FEDTALK_FIELD("federation", "secure_agg", c.federation.secure_agg),
      FEDTALK_FIELD("federation", "dropout_rate", c.federation.dropout_rate),
      FEDTALK_FIELD("federation", "workers", c.federation.workers),
      FEDTALK_FIELD("federation", "alpha_mix",
                    c.federation.reliability.alpha_mix),
      FEDTALK_FIELD("federation", "reliability_steps",
                    c.federation.reliability.sampler_steps),

      FEDTALK_FIELD("privacy", "enabled", c.federation.dp.enabled),
      FEDTALK_FIELD("privacy", "clip_norm", c.federation.dp.clip_norm),
      FEDTALK_FIELD("privacy", "noise_multiplier",
                    c.federation.dp.noise_multiplier),

      FEDTALK_FIELD("eval", "clips", c.federation.eval.clips),
      FEDTALK_FIELD("eval", "draws", c.federation.eval.draws),
      FEDTALK_FIELD("eval", "sampler_steps", c.federation.eval.sampler_steps),
      FEDTALK_FIELD("eval", "stochastic", c.federation.eval.stochastic),
  };
  return *fields;
}

#undef FEDTALK_FIELD

const Field* FindField(std::string_view section, std::string_view key) {
  for (const Field& f : Fields()) {
    if (f.section == section && f.key == key) return &f;
  }
  return nullptr;
}

std::string_view Trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
    s.remove_prefix(1);
  }
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
    s.remove_suffix(1);
  }
  return s;
}

}  // namespace

DenoiserDims ExperimentConfig::dims() const {
  DenoiserDims d;
  d.latent_dim = world.latent_dim;
  d.time_embed_dim = model.time_embed_dim;
  d.cond_dim = world.cond_dim;
  d.identity_dim = world.identity_dim;
  d.hidden_dim = model.hidden_dim;
  return d;
}

absl::Status ExperimentConfig::Validate() const {
  if (absl::Status s = world.Validate(); !s.ok()) return s;
  absl::StatusOr<NoiseSchedule> sched = BuildLinearSchedule(
      schedule.steps, schedule.beta_start, schedule.beta_end);
  if (!sched.ok()) return sched.status();
  if (absl::Status s = dims().Validate(); !s.ok()) return s;
  if (model.adapter_rank < 1) {
    return absl::InvalidArgumentError("adapter_rank must be at least 1");
  }
  if (model.perceptual_dim < 1) {
    return absl::InvalidArgumentError("perceptual_dim must be at least 1");
  }
  if (model.pretrain.steps < 0 || model.pretrain.batch_size < 1 ||
      !(model.pretrain.learning_rate > 0.0)) {
    return absl::InvalidArgumentError(
        "pretraining needs steps >= 0, batch_size >= 1 and learning_rate > 0");
  }
  return federation.Validate(*sched);
}

absl::StatusOr<ExperimentConfig> ParseConfig(std::string_view text,
                                             std::string_view source) {
  ExperimentConfig config;
  std::string section;
  std::set<std::string> seen;
  int line_number = 0;
  const std::string where(source);
  while (!text.empty()) {
    ++line_number;
    const size_t eol = text.find('\n');
    std::string_view line = Trim(text.substr(0, eol));
    text.remove_prefix(eol == std::string_view::npos ? text.size() : eol + 1);
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    const std::string prefix = absl::StrCat(where, ":", line_number, ": ");
    if (line.front() == '[') {
      if (line.back() != ']') {
        return absl::InvalidArgumentError(
            absl::StrCat(prefix, "malformed section header"));
      }
      section = std::string(Trim(line.substr(1, line.size() - 2)));
      bool known = false;
      for (const Field& f : Fields()) known |= !section.empty() && f.section == section;
      if (!known) {
        return absl::InvalidArgumentError(
            absl::StrCat(prefix, "unknown section [", section, "]"));
      }
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      return absl::InvalidArgumentError(
          absl::StrCat(prefix, "expected 'key = value'"));
    }
    const std::string key(Trim(line.substr(0, eq)));
    const std::string_view value = Trim(line.substr(eq + 1));
    const Field* field = FindField(section, key);
    if (field == nullptr) {
      return absl::InvalidArgumentError(absl::StrCat(
          prefix, "unknown key '", key, "'",
          section.empty() ? std::string(" at top level")
                          : absl::StrCat(" in section [", section, "]")));
    }
    if (!seen.insert(field->name()).second) {
      return absl::InvalidArgumentError(
          absl::StrCat(prefix, "duplicate key '", field->name(), "'"));
    }
    if (absl::Status s = field->set(config, value); !s.ok()) {
      return absl::InvalidArgumentError(
          absl::StrCat(prefix, field->name(), ": ", s.message()));
    }
  }
  return config;
}

absl::StatusOr<ExperimentConfig> LoadConfig(const std::string& path) {
  absl::StatusOr<std::string> text = ReadBinaryFile(path);
  if (!text.ok()) return text.status();
  return ParseConfig(*text, path);
}

absl::Status SetConfigValue(ExperimentConfig& config, std::string_view name,
                            std::string_view value) {
  const size_t dot = name.find('.');
  const std::string_view section =
      dot == std::string_view::npos ? std::string_view() : name.substr(0, dot);
  const std::string_view key =
      dot == std::string_view::npos ? name : name.substr(dot + 1);
  const Field* field = FindField(section, key);
  if (field == nullptr) {
    return absl::InvalidArgumentError(
        absl::StrCat("unknown config key '", std::string(name), "'"));
  }
  if (absl::Status s = field->set(config, Trim(value)); !s.ok()) {
    return absl::InvalidArgumentError(
        absl::StrCat(std::string(name), ": ", s.message()));
  }
  return absl::OkStatus();
}

absl::Status ApplyEnvironmentOverrides(ExperimentConfig& config) {
  for (const Field& f : Fields()) {
    std::string var = absl::AsciiStrToUpper(
        f.section.empty() ? absl::StrCat("FEDTALK_", f.key)
                          : absl::StrCat("FEDTALK_", f.section, "_", f.key));
    const char* value = std::getenv(var.c_str());
    if (value == nullptr) continue;
    if (absl::Status s = f.set(config, Trim(value)); !s.ok()) {
      return absl::InvalidArgumentError(
          absl::StrCat("environment ", var, ": ", s.message()));
    }
  }
  return absl::OkStatus();
}

std::string SerializeConfig(const ExperimentConfig& config) {
  const DpConfig& dp = config.federation.dp;
  std::string out = absl::StrCat(
      "# Resolved configuration.\n"
      "# Privacy accounting inputs: dp_enabled=",
      dp.enabled ? "true" : "false", " clip_norm=", FormatDouble(dp.clip_norm),
      " noise_multiplier=", FormatDouble(dp.noise_multiplier),
      " client_fraction=", FormatDouble(config.federation.client_fraction),
      " rounds=", config.federation.num_rounds,
      " num_clients=", config.world.num_clients, "\n");
  std::string section = "\x01";
  for (const Field& f : Fields()) {
    if (f.section != section) {
      section = f.section;
      if (!section.empty()) absl::StrAppend(&out, "\n[", section, "]\n");
    }
    absl::StrAppend(&out, f.key, " = ", f.get(config), "\n");
  }
  return out;
}

}  // namespace fedtalk
