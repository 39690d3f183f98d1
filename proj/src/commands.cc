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

#include "frmd/commands.h"

#include <zlib.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <ostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "frmd/checkpoint.h"
#include "frmd/dataset_io.h"
#include "frmd/errors.h"
#include "frmd/policies.h"
#include "frmd/svg_plot.h"

namespace frmd {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string OutPath(const RunConfig& config, const std::string& name) {
  return (fs::path(config.out) / name).string();
}

void EnsureDir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError("cannot create output directory '" + dir + "'");
  }
}

// Opens and closes the file to surface permission problems early.
void ProbeWritable(const std::string& path) {
  std::ofstream probe(path, std::ios::binary | std::ios::app);
  if (!probe) throw IoError("cannot write '" + path + "'");
}

void Require(const std::string& path, const std::string& what,
             const std::string& producer) {
  if (!fs::exists(path)) {
    throw ValidationError("missing " + what + " '" + path + "'; run " +
                          producer + " first");
  }
}

double Seconds(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                       since)
      .count();
}

void Begin(const char* name, const RunConfig& config, std::ostream& log) {
  log << "# frmd " << name << "\n# resolved config (hash "
      << ConfigHash(config) << ")\n"
      << ResolvedConfigText(config) << std::flush;
}

void CheckCompatible(const diffusion::DenoisePipeline& p,
                     const RunConfig& config, const std::string& what) {
  if (p.dof() != envs::kActionDim) {
    throw ValidationError(what + " has dof " + std::to_string(p.dof()) +
                          " but the tasks have " +
                          std::to_string(envs::kActionDim));
  }
  if (p.obs_size != ObsSize(config)) {
    throw ValidationError(what + " expects observations of size " +
                          std::to_string(p.obs_size) + ", config gives " +
                          std::to_string(ObsSize(config)));
  }
  if (p.horizon != config.env.horizon) {
    throw ValidationError(what + " has horizon " + std::to_string(p.horizon) +
                          ", config gives " +
                          std::to_string(config.env.horizon));
  }
}

std::string Hex(uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%08x", v);
  return buf;
}

json LatencyJson(const eval::LatencyStats& s) {
  return {{"mean_ms", s.mean_ms},
          {"std_ms", s.std_ms},
          {"min_ms", s.min_ms},
          {"max_ms", s.max_ms},
          {"reps", s.samples_ms.size()}};
}

// Replays the expert demonstration of each evaluation task.
class ExpertForTask : public envs::Policy {
 public:
  ExpertForTask(const RunConfig& config) : config_(config) {}
  void Reset(const envs::TaskInstance& task) {
    policy_ = std::make_unique<envs::ExpertReplayPolicy>(
        envs::ExpertDemo(task, task.seed, config_.env), config_.env.horizon);
  }
  Eigen::MatrixXd Plan(const envs::PlanRequest& request,
                       std::mt19937_64& rng) override {
    return policy_->Plan(request, rng);
  }
  std::string name() const override { return "expert"; }

 private:
  const RunConfig& config_;
  std::unique_ptr<envs::ExpertReplayPolicy> policy_;
};

}  // namespace

std::vector<envs::Demonstration> GenerateDemos(const RunConfig& config) {
  std::vector<envs::Demonstration> demos;
  demos.reserve(config.demos);
  for (int i = 0; i < config.demos; ++i) {
    const uint64_t seed = config.demo_seed_offset + static_cast<uint64_t>(i);
    const envs::TaskInstance task = envs::MakeTask(config.task, seed, config.env);
    demos.push_back(envs::ExpertDemo(task, seed, config.env));
  }
  return demos;
}

diffusion::DenoisePipeline MakeRunPipeline(const RunConfig& config,
                                           nn::HeadMode head,
                                           const Normalizer& normalizer) {
  return diffusion::MakePipeline(config.mp, head, config.env.horizon,
                                 ObsSize(config), MakeSchedule(config),
                                 normalizer);
}

TrainingData PrepareTrainingData(const RunConfig& config,
                                 const std::vector<envs::Demonstration>& demos,
                                 const Normalizer* fixed) {
  envs::SliceStats stats;
  const auto windows = envs::SliceDataset(demos, config.env.horizon,
                                          config.env.obs_window,
                                          config.env.dt, &stats);
  if (windows.empty()) {
    throw ValidationError("no training windows: every demonstration is "
                          "shorter than horizon + obs_window");
  }
  TrainingData data;
  data.normalizer = fixed ? *fixed : envs::FitActionNormalizer(windows);
  data.set = envs::StackWindows(windows, data.normalizer);
  data.windows = stats.windows;
  data.skipped_demos = stats.skipped_demos;
  return data;
}

diffusion::TeacherTrainResult TrainRunTeacher(const RunConfig& config,
                                              const TrainingData& data,
                                              nn::HeadMode head) {
  diffusion::TeacherTrainConfig tc = config.teacher.train;
  tc.seed = config.seed;
  diffusion::TeacherTrainResult result = diffusion::TrainTeacher(
      data.set, MakeRunPipeline(config, head, data.normalizer), tc);
  SnapToFloat(result.model.net);
  return result;
}

consistency::DistillResult DistillRunStudent(
    const RunConfig& config, const TrainingData& data,
    const diffusion::TeacherModel& teacher) {
  consistency::DistillConfig dc = config.distill;
  dc.seed = config.seed;
  consistency::DistillResult result =
      consistency::Distill(data.set, teacher, dc);
  SnapToFloat(result.student.online);
  SnapToFloat(result.student.target);
  return result;
}

std::mt19937_64 EpisodeRng(uint64_t seed, int episode) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32),
                    static_cast<uint32_t>(episode), 0x9e3779b9u};
  return std::mt19937_64(seq);
}

std::vector<eval::PolicyRun> RunPolicy(envs::Policy& policy,
                                       const RunConfig& config,
                                       const std::string& checkpoint_id,
                                       const std::string& trace_dir) {
  auto* expert = dynamic_cast<ExpertForTask*>(&policy);
  const std::string task_name = envs::ToString(config.task);
  std::vector<eval::PolicyRun> runs;
  for (uint64_t seed : config.eval.seeds) {
    eval::PolicyRun run;
    run.policy = policy.name();
    run.task = task_name;
    run.seed = seed;
    run.checkpoint_id = checkpoint_id;
    for (int ep = 0; ep < config.eval.episodes; ++ep) {
      const envs::TaskInstance task = envs::MakeTask(
          config.task, envs::EvalTaskSeed(seed, ep, config.eval.task_offset),
          config.env);
      if (expert) expert->Reset(task);
      std::mt19937_64 rng = EpisodeRng(seed, ep);
      run.episodes.push_back(envs::Rollout(policy, task, config.env, rng));
      if (!trace_dir.empty()) {
        const std::string name = task_name + "_" + policy.name() + "_s" +
                                 std::to_string(seed) + "_e" +
                                 std::to_string(ep) + ".csv";
        WriteTextFile((fs::path(trace_dir) / name).string(),
                      TraceToCsv(run.episodes.back()));
        run.trace_files.push_back(name);
      }
    }
    runs.push_back(std::move(run));
  }
  return runs;
}

std::string FileId(const std::string& path) {
  const std::string bytes = ReadTextFile(path);
  // Adler-32: a CRC over a file that ends in its own CRC is a constant.
  return Hex(static_cast<uint32_t>(
      adler32(1L, reinterpret_cast<const Bytef*>(bytes.data()),
              static_cast<uInt>(bytes.size()))));
}

void CmdGenData(const RunConfig& config, std::ostream& log) {
  Begin("gen-data", config, log);
  EnsureDir(config.out);
  const std::string path = OutPath(config, "demos.jsonl");
  ProbeWritable(path);
  const auto t0 = std::chrono::steady_clock::now();
  const auto demos = GenerateDemos(config);
  WriteDemos(path, demos);
  log << "wrote " << demos.size() << " " << envs::ToString(config.task)
      << " demonstrations to " << path << " in " << Seconds(t0) << " s\n";
}

void CmdTrainTeacher(const RunConfig& config, std::ostream& log) {
  Begin("train-teacher", config, log);
  const std::string demos_path = OutPath(config, "demos.jsonl");
  Require(demos_path, "dataset", "gen-data");
  EnsureDir(config.out);
  const TrainingData data = PrepareTrainingData(config, ReadDemos(demos_path));
  log << data.windows << " windows (" << data.skipped_demos
      << " short demos skipped)\n";

  std::vector<std::pair<nn::HeadMode, std::string>> jobs = {
      {config.teacher.head,
       config.teacher.head == nn::HeadMode::kRaw ? "raw" : "teacher"}};
  if (config.teacher.train_raw && config.teacher.head != nn::HeadMode::kRaw) {
    jobs.push_back({nn::HeadMode::kRaw, "raw"});
  }
  for (const auto& [head, name] : jobs) {
    const std::string ckpt = OutPath(config, name + ".ckpt");
    const std::string csv = OutPath(config, name + "_loss.csv");
    ProbeWritable(ckpt);
    ProbeWritable(csv);
    const auto t0 = std::chrono::steady_clock::now();
    const auto result = TrainRunTeacher(config, data, head);
    SaveCheckpoint(ckpt, TeacherCheckpoint(result.model));
    WriteTextFile(csv, LossCurveToCsv(result.curve));
    log << name << " (" << nn::ToString(head) << " head): validation loss "
        << result.initial_validation_loss << " -> "
        << result.final_validation_loss << ", final train loss "
        << (result.curve.empty() ? 0.0 : result.curve.back().loss) << ", "
        << Seconds(t0) << " s -> " << ckpt << "\n";
  }
}

void CmdDistill(const RunConfig& config, std::ostream& log) {
  Begin("distill", config, log);
  const std::string demos_path = OutPath(config, "demos.jsonl");
  const std::string teacher_path = OutPath(config, "teacher.ckpt");
  Require(demos_path, "dataset", "gen-data");
  Require(teacher_path, "teacher checkpoint", "train-teacher");
  EnsureDir(config.out);
  const diffusion::TeacherModel teacher =
      ToTeacher(LoadCheckpoint(teacher_path));
  CheckCompatible(teacher.pipeline, config, "teacher checkpoint");
  if (!(teacher.pipeline.schedule == MakeSchedule(config))) {
    throw ValidationError("teacher checkpoint noise schedule differs from "
                          "the configured schedule");
  }
  const TrainingData data = PrepareTrainingData(
      config, ReadDemos(demos_path), &teacher.pipeline.normalizer);

  const std::string ckpt = OutPath(config, "student.ckpt");
  const std::string online = OutPath(config, "student_online.ckpt");
  const std::string csv = OutPath(config, "distill_loss.csv");
  ProbeWritable(ckpt);
  ProbeWritable(csv);
  const auto t0 = std::chrono::steady_clock::now();
  consistency::DistillResult result = DistillRunStudent(config, data, teacher);
  SaveCheckpoint(ckpt, StudentCheckpoint(result.student));
  consistency::StudentModel as_online = result.student;
  as_online.config.deploy_target = false;
  SaveCheckpoint(online, StudentCheckpoint(as_online));
  WriteTextFile(csv, LossCurveToCsv(result.curve));
  log << "student: final distill loss "
      << (result.curve.empty() ? 0.0 : result.curve.back().loss) << ", "
      << Seconds(t0) << " s -> " << ckpt << "\n";
}

void CmdEval(const RunConfig& config, std::ostream& log) {
  Begin("eval", config, log);
  EnsureDir(config.out);
  const std::string report_path = OutPath(config, "report.json");
  ProbeWritable(report_path);
  std::string trace_dir;
  if (config.eval.write_traces) {
    trace_dir = OutPath(config, "traces");
    EnsureDir(trace_dir);
  }

  std::vector<eval::PolicyRun> runs;
  auto add = [&](std::vector<eval::PolicyRun> more) {
    for (auto& r : more) runs.push_back(std::move(r));
  };
  for (const std::string& name : config.eval.policies) {
    const auto t0 = std::chrono::steady_clock::now();
    if (name == "expert") {
      ExpertForTask expert(config);
      add(RunPolicy(expert, config, "expert", trace_dir));
    } else if (name == "student") {
      const std::string path = OutPath(config, "student.ckpt");
      Require(path, "student checkpoint", "distill");
      StudentPolicy policy(ToStudent(LoadCheckpoint(path)), "student");
      CheckCompatible(policy.model().pipeline, config, "student checkpoint");
      add(RunPolicy(policy, config, FileId(path), trace_dir));
    } else {
      const std::string path = OutPath(config, name + ".ckpt");
      Require(path, name + " checkpoint", "train-teacher");
      DiffusionPolicy policy(ToTeacher(LoadCheckpoint(path)),
                             config.teacher.sample_steps, config.teacher.solver,
                             name);
      CheckCompatible(policy.model().pipeline, config, name + " checkpoint");
      add(RunPolicy(policy, config, FileId(path), trace_dir));
    }
    log << "evaluated " << name << " in " << Seconds(t0) << " s\n";
  }
  const eval::EvalReport report = eval::AssembleReport(
      runs, config.eval.k_max, config.eval.min_segment, ConfigHash(config));
  WriteTextFile(report_path, eval::ReportToJson(report));
  for (const auto& [task, policies] : report.tasks) {
    for (const auto& [policy, r] : policies) {
      log << task << " " << policy << ": success " << r.success.mean << " +- "
          << r.success.std << ", median non-smooth " << r.smoothness.median
          << "\n";
    }
  }
  log << "report -> " << report_path << "\n";
}

void CmdBench(const RunConfig& config, std::ostream& log) {
  Begin("bench", config, log);
  EnsureDir(config.out);
  const std::string bench_path = OutPath(config, "bench.json");
  ProbeWritable(bench_path);

  // Probe: the first evaluation task seen from its start state.
  const envs::TaskInstance task = envs::MakeTask(
      config.task,
      envs::EvalTaskSeed(config.eval.seeds.front(), 0, config.eval.task_offset),
      config.env);
  envs::PlanRequest request;
  request.obs_window.resize(config.env.obs_window, envs::kObsDim);
  request.obs_window.rowwise() =
      envs::Observation(task, task.start, false).transpose();
  request.position = task.start;
  request.velocity.setZero();

  json out;
  out["task"] = envs::ToString(config.task);
  out["reps"] = config.eval.bench_reps;
  std::map<std::string, eval::LatencyStats> stats;
  for (const std::string name : {"teacher", "raw", "student"}) {
    const std::string path = OutPath(config, name + ".ckpt");
    if (!fs::exists(path)) {
      if (name == "raw") continue;
      Require(path, name + " checkpoint",
              name == "student" ? "distill" : "train-teacher");
    }
    const Checkpoint ck = LoadCheckpoint(path);
    CheckCompatible(ck.pipeline, config, name + " checkpoint");
    const PlanInputs in = MakePlanInputs(ck.pipeline, request);
    std::mt19937_64 rng(config.seed);
    std::function<void()> call;
    std::shared_ptr<void> keep;
    if (name == "student") {
      auto student = std::make_shared<consistency::StudentModel>(ToStudent(ck));
      keep = student;
      call = [student, &in, &rng] {
        consistency::SampleStudent(*student, in.obs, in.bc, rng);
      };
    } else {
      auto model = std::make_shared<diffusion::TeacherModel>(ToTeacher(ck));
      keep = model;
      const int steps = config.teacher.sample_steps;
      const diffusion::Solver solver = config.teacher.solver;
      call = [model, &in, &rng, steps, solver] {
        diffusion::SampleTeacher(*model, in.obs, in.bc, steps, rng, solver);
      };
    }
    stats[name] = eval::BenchInference(call, config.eval.bench_reps);
    out[name] = LatencyJson(stats[name]);
    out[name]["steps"] = name == "student" ? 1 : config.teacher.sample_steps;
    log << name << ": " << stats[name].mean_ms << " ms mean\n";
  }
  out["student_to_teacher_ratio"] =
      stats["student"].mean_ms / stats["teacher"].mean_ms;
  WriteTextFile(bench_path, out.dump(2) + "\n");
  log << "student/teacher latency ratio "
      << out["student_to_teacher_ratio"].get<double>() << " -> " << bench_path
      << "\n";
}

void CmdPlot(const RunConfig& config, std::ostream& log) {
  Begin("plot", config, log);
  if (config.plot.trace.empty() || config.plot.report.empty()) {
    throw ConfigError("plot needs plot.trace and plot.report");
  }
  const Eigen::MatrixXd trace = TraceFromCsv(ReadTextFile(config.plot.trace));
  if (trace.rows() == 0) throw ValidationError("trace file has no points");
  json report;
  try {
    report = json::parse(ReadTextFile(config.plot.report));
  } catch (const json::parse_error& e) {
    throw ValidationError("report is not valid JSON: " + std::string(e.what()));
  }

  // Locate the episode by trace file name.
  const std::string base = fs::path(config.plot.trace).filename().string();
  TracePlot plot;
  plot.trace = trace;
  bool found = false;
  try {
    const uint64_t offset = config.eval.task_offset;
    for (const auto& [task_name, policies] : report.at("tasks").items()) {
      for (const auto& [policy, entry] : policies.items()) {
        for (const auto& ep : entry.at("episodes")) {
          if (ep.value("trace", std::string()) != base) continue;
          plot.nonsmooth_indices =
              ep.at("nonsmooth_indices").get<std::vector<int>>();
          const envs::TaskInstance task = envs::MakeTask(
              envs::ParseTaskKind(task_name),
              envs::EvalTaskSeed(ep.at("seed").get<uint64_t>(),
                                 ep.at("episode").get<int>(), offset),
              config.env);
          plot.goal = task.goal;
          plot.title = task_name + " / " + policy + " / " + base;
          found = true;
        }
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError("report does not match the schema: " +
                          std::string(e.what()));
  }
  if (!found) {
    throw ValidationError("report has no episode with trace file '" + base +
                          "'");
  }
  std::string output = config.plot.output;
  if (output.empty()) {
    output = fs::path(config.plot.trace).replace_extension(".svg").string();
  }
  WriteTextFile(output, RenderTraceSvg(plot));
  log << plot.nonsmooth_indices.size() << " non-smooth points marked -> "
      << output << "\n";
}

int RunCli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"frmd: movement-primitive diffusion teacher and one-step "
               "student"};
  app.require_subcommand(1);
  std::string config_path;
  uint64_t seed = 0;
  std::string out_dir;
  std::vector<std::string> sets;
  struct Command {
    std::string name;
    void (*fn)(const RunConfig&, std::ostream&);
    std::string help;
  };
  const std::vector<Command> commands = {
      {"gen-data", CmdGenData, "write expert demonstrations"},
      {"train-teacher", CmdTrainTeacher,
       "train the diffusion teacher (and raw baseline)"},
      {"distill", CmdDistill, "distill the one-step student"},
      {"eval", CmdEval, "roll out policies and write report.json"},
      {"bench", CmdBench, "time teacher and student on one probe"},
      {"plot", CmdPlot, "render a trace CSV as SVG"}};
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, fn, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "key=value config file")
        ->required();
    sub->add_option("--seed", seed, "overrides the config seed");
    sub->add_option("--out", out_dir, "overrides the output directory");
    sub->add_option("--set", sets, "extra key=value override");
    subs[name] = sub;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitValidation;
  }

  try {
    RunConfig config = LoadRunConfig(config_path);
    for (const std::string& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("--set expects key=value, got '" + s + "'");
      }
      SetConfigValue(config, s.substr(0, eq), s.substr(eq + 1));
    }
    for (const auto& [name, sub] : subs) {
      if (sub->parsed() && sub->count("--seed")) config.seed = seed;
    }
    if (!out_dir.empty()) config.out = out_dir;
    config.Validate();
    for (const Command& c : commands) {
      if (subs.at(c.name)->parsed()) c.fn(config, out);
    }
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const TrainingError& e) {
    err << "training failed at step " << e.step() << ": " << e.what() << "\n";
    return kExitValidation;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitOk;
}

}  // namespace frmd
