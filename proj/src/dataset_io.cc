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

#include "frmd/dataset_io.h"

#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "frmd/errors.h"

namespace frmd {
namespace {

using nlohmann::json;

json MatrixRows(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd RowsMatrix(const json& rows, int cols, const std::string& what,
                           int line) {
  const std::string where = "line " + std::to_string(line) + ": ";
  if (!rows.is_array() || rows.empty()) {
    throw ValidationError(where + what + " must be a non-empty array");
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), cols);
  for (size_t r = 0; r < rows.size(); ++r) {
    const json& row = rows[r];
    if (!row.is_array() || static_cast<int>(row.size()) != cols) {
      throw ValidationError(where + what + " row " + std::to_string(r) +
                            " must have " + std::to_string(cols) + " numbers");
    }
    for (int c = 0; c < cols; ++c) {
      if (!row[c].is_number()) {
        throw ValidationError(where + what + " holds a non-number");
      }
      m(static_cast<Eigen::Index>(r), c) = row[c].get<double>();
    }
  }
  return m;
}

std::string Num(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

bool ParseDouble(const std::string& s, double& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

}  // namespace

std::string DemosToJsonl(const std::vector<envs::Demonstration>& demos) {
  std::string out;
  for (const envs::Demonstration& d : demos) {
    json line;
    line["task"] = envs::ToString(d.kind);
    line["seed"] = d.seed;
    line["obs"] = MatrixRows(d.obs);
    line["actions"] = MatrixRows(d.actions);
    out += line.dump() + "\n";
  }
  json summary;
  summary["count"] = demos.size();
  summary["obs_dim"] = envs::kObsDim;
  summary["action_dim"] = envs::kActionDim;
  out += summary.dump() + "\n";
  return out;
}

std::vector<envs::Demonstration> DemosFromJsonl(const std::string& text) {
  std::vector<envs::Demonstration> demos;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  bool have_summary = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (have_summary) throw ValidationError(where + "data after summary line");
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError(where + "malformed JSON (" + e.what() + ")");
    }
    if (!j.is_object()) throw ValidationError(where + "expected an object");
    if (j.contains("count")) {
      if (!j["count"].is_number_unsigned() ||
          j["count"].get<size_t>() != demos.size()) {
        throw ValidationError(where + "summary count does not match " +
                              std::to_string(demos.size()) + " records");
      }
      if (j.value("obs_dim", -1) != envs::kObsDim ||
          j.value("action_dim", -1) != envs::kActionDim) {
        throw ValidationError(where + "summary dimensions do not match");
      }
      have_summary = true;
      continue;
    }
    envs::Demonstration d;
    try {
      d.kind = envs::ParseTaskKind(j.at("task").get<std::string>());
      d.seed = j.at("seed").get<uint64_t>();
    } catch (const json::exception& e) {
      throw ValidationError(where + "bad task or seed (" + e.what() + ")");
    } catch (const ConfigError& e) {
      throw ValidationError(where + e.what());
    }
    if (!j.contains("obs") || !j.contains("actions")) {
      throw ValidationError(where + "record needs obs and actions");
    }
    d.obs = RowsMatrix(j["obs"], envs::kObsDim, "obs", line_no);
    d.actions = RowsMatrix(j["actions"], envs::kActionDim, "actions", line_no);
    if (d.obs.rows() != d.actions.rows()) {
      throw ValidationError(where + "obs and actions differ in length");
    }
    demos.push_back(std::move(d));
  }
  if (!have_summary) throw ValidationError("missing summary line");
  return demos;
}

void WriteDemos(const std::string& path,
                const std::vector<envs::Demonstration>& demos) {
  WriteTextFile(path, DemosToJsonl(demos));
}

std::vector<envs::Demonstration> ReadDemos(const std::string& path) {
  try {
    return DemosFromJsonl(ReadTextFile(path));
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

std::string TraceToCsv(const envs::EpisodeResult& episode) {
  std::string out = "step,x,y,commanded_x,commanded_y\n";
  for (Eigen::Index i = 0; i < episode.trace.rows(); ++i) {
    out += std::to_string(i) + "," + Num(episode.trace(i, 0)) + "," +
           Num(episode.trace(i, 1)) + ",";
    if (i > 0 && i - 1 < episode.commanded.rows()) {
      out += Num(episode.commanded(i - 1, 0)) + "," +
             Num(episode.commanded(i - 1, 1));
    } else {
      out += ",";
    }
    out += "\n";
  }
  return out;
}

Eigen::MatrixXd TraceFromCsv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  std::vector<Eigen::Vector2d> points;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("step", 0) == 0) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    Eigen::Vector2d p;
    if (cells.size() < 3 || !ParseDouble(cells[1], p.x()) ||
        !ParseDouble(cells[2], p.y())) {
      throw ValidationError("trace line " + std::to_string(line_no) +
                            ": expected step,x,y[,commanded_x,commanded_y]");
    }
    points.push_back(p);
  }
  Eigen::MatrixXd trace(static_cast<Eigen::Index>(points.size()), 2);
  for (size_t i = 0; i < points.size(); ++i) {
    trace.row(static_cast<Eigen::Index>(i)) = points[i].transpose();
  }
  return trace;
}

std::string LossCurveToCsv(const std::vector<diffusion::LossRecord>& curve) {
  std::string out = "step,loss,lr\n";
  for (const auto& r : curve) {
    out += std::to_string(r.step) + "," + Num(r.loss) + "," + Num(r.lr) + "\n";
  }
  return out;
}

std::string ReadTextFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void WriteTextFile(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace frmd
