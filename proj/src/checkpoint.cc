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

#include "frmd/checkpoint.h"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "frmd/errors.h"

namespace frmd {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

bool IsStudent(CheckpointRole role) {
  return role == CheckpointRole::kStudentOnline ||
         role == CheckpointRole::kStudentTarget;
}

class Writer {
 public:
  template <typename T>
  void Put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const uint8_t*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void PutBytes(const void* data, size_t n) {
    const auto* p = static_cast<const uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  std::vector<uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<uint8_t> bytes_;
};

class Reader {
 public:
  Reader(const uint8_t* data, size_t size) : data_(data), size_(size) {}

  template <typename T>
  T Get(const char* what) {
    if (size_ - at_ < sizeof(T)) {
      throw ValidationError(std::string("checkpoint truncated reading ") +
                            what + " at byte " + std::to_string(at_));
    }
    T value;
    std::memcpy(&value, data_ + at_, sizeof(T));
    at_ += sizeof(T);
    return value;
  }
  size_t remaining() const { return size_ - at_; }

 private:
  const uint8_t* data_;
  size_t size_;
  size_t at_ = 0;
};

uint32_t Crc(const uint8_t* data, size_t n) {
  return static_cast<uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

template <typename E>
E EnumFrom(uint8_t raw, uint8_t count, const char* what) {
  if (raw >= count) {
    throw ValidationError(std::string("checkpoint has an invalid ") + what +
                          " code " + std::to_string(raw));
  }
  return static_cast<E>(raw);
}

int32_t Positive(int32_t v, const char* what) {
  if (v <= 0 || v > (1 << 24)) {
    throw ValidationError(std::string("checkpoint has an invalid ") + what);
  }
  return v;
}

}  // namespace

std::string ToString(CheckpointRole role) {
  switch (role) {
    case CheckpointRole::kTeacher:
      return "teacher";
    case CheckpointRole::kStudentOnline:
      return "student-online";
    case CheckpointRole::kStudentTarget:
      return "student-target";
    case CheckpointRole::kRawBaseline:
      return "raw-baseline";
  }
  return "?";
}

void SnapToFloat(nn::DenoiserNet& net) {
  for (nn::DenseLayer& layer : net.layers) {
    layer.weight = layer.weight.cast<float>().cast<double>();
    layer.bias = layer.bias.cast<float>().cast<double>();
  }
}

std::vector<uint8_t> SerializeCheckpoint(const Checkpoint& ck) {
  if (IsStudent(ck.role) != ck.consistency.has_value()) {
    throw ValidationError("consistency settings must be present exactly for "
                          "student checkpoints");
  }
  const diffusion::DenoisePipeline& p = ck.pipeline;
  const nn::NetLayout& layout = ck.net.layout;
  Writer w;
  w.PutBytes("FRMD", 4);
  w.Put<uint32_t>(kCheckpointVersion);
  w.Put<uint8_t>(static_cast<uint8_t>(ck.role));

  w.Put<uint8_t>(static_cast<uint8_t>(p.head));
  w.Put<int32_t>(p.horizon);
  w.Put<int32_t>(p.obs_size);
  w.Put<int32_t>(layout.embed_size);
  w.Put<double>(layout.sigma_data);
  w.Put<uint8_t>(static_cast<uint8_t>(ck.net.activation));
  const std::vector<int> hidden = ck.net.HiddenSizes();
  w.Put<uint32_t>(static_cast<uint32_t>(hidden.size()));
  for (int h : hidden) w.Put<int32_t>(h);

  const mp::MPConfig& mp = p.mp_config;
  w.Put<int32_t>(mp.dof);
  w.Put<int32_t>(mp.n_basis);
  w.Put<double>(mp.alpha);
  w.Put<double>(mp.tau_s);
  w.Put<double>(mp.alpha_x);
  w.Put<int32_t>(mp.grid_points);
  w.Put<double>(mp.basis_width);
  w.Put<int32_t>(mp.quad_substeps);

  const diffusion::NoiseSchedule& s = p.schedule;
  w.Put<int32_t>(s.size());
  w.Put<double>(s.epsilon);
  w.Put<double>(s.t_max);
  w.Put<double>(s.rho);
  for (double level : s.levels) w.Put<double>(level);

  if (ck.consistency) {
    const consistency::ConsistencyConfig& c = *ck.consistency;
    w.Put<int32_t>(c.k);
    w.Put<double>(c.mu);
    w.Put<double>(c.gamma_d);
    w.Put<double>(c.beta);
    w.Put<uint8_t>(static_cast<uint8_t>(c.c_out));
    w.Put<uint8_t>(static_cast<uint8_t>(c.metric));
    w.Put<uint8_t>(static_cast<uint8_t>(c.weighting));
    w.Put<int64_t>(c.steps);
    w.Put<uint8_t>(c.deploy_target ? 1 : 0);
  }

  const Normalizer& n = p.normalizer;
  w.Put<uint32_t>(static_cast<uint32_t>(n.dim()));
  for (int i = 0; i < n.dim(); ++i) w.Put<double>(n.center(i));
  for (int i = 0; i < n.dim(); ++i) w.Put<double>(n.half_range(i));

  const Eigen::VectorXd flat = nn::FlattenParameters(ck.net);
  w.Put<uint64_t>(static_cast<uint64_t>(flat.size()));
  for (Eigen::Index i = 0; i < flat.size(); ++i) {
    w.Put<float>(static_cast<float>(flat(i)));
  }
  std::vector<uint8_t>& bytes = w.bytes();
  const uint32_t crc = Crc(bytes.data(), bytes.size());
  w.Put<uint32_t>(crc);
  return std::move(bytes);
}

Checkpoint DeserializeCheckpoint(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 4 + sizeof(uint32_t) * 2 ||
      std::memcmp(bytes.data(), "FRMD", 4) != 0) {
    throw ValidationError("not a checkpoint (bad magic)");
  }
  const size_t body = bytes.size() - sizeof(uint32_t);
  uint32_t stored = 0;
  std::memcpy(&stored, bytes.data() + body, sizeof(stored));
  if (stored != Crc(bytes.data(), body)) {
    throw ValidationError("checkpoint checksum mismatch");
  }

  Reader r(bytes.data() + 4, body - 4);
  const uint32_t version = r.Get<uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw ValidationError("unsupported checkpoint version " +
                          std::to_string(version));
  }
  Checkpoint ck;
  ck.role = EnumFrom<CheckpointRole>(r.Get<uint8_t>("role"), 4, "role");

  const auto head = EnumFrom<nn::HeadMode>(r.Get<uint8_t>("head"), 2, "head");
  const int horizon = Positive(r.Get<int32_t>("horizon"), "horizon");
  const int obs_size = Positive(r.Get<int32_t>("obs_size"), "obs size");
  const int embed_size = Positive(r.Get<int32_t>("embed_size"), "embed size");
  const double sigma_data = r.Get<double>("sigma_data");
  const auto activation =
      EnumFrom<nn::Activation>(r.Get<uint8_t>("activation"), 2, "activation");
  const uint32_t n_hidden = r.Get<uint32_t>("hidden count");
  if (n_hidden > 64) throw ValidationError("checkpoint has too many layers");
  std::vector<int> hidden;
  for (uint32_t i = 0; i < n_hidden; ++i) {
    hidden.push_back(Positive(r.Get<int32_t>("hidden size"), "hidden size"));
  }

  mp::MPConfig mp;
  mp.dof = Positive(r.Get<int32_t>("dof"), "dof");
  mp.n_basis = Positive(r.Get<int32_t>("n_basis"), "basis count");
  mp.alpha = r.Get<double>("alpha");
  mp.tau_s = r.Get<double>("tau_s");
  mp.alpha_x = r.Get<double>("alpha_x");
  mp.grid_points = Positive(r.Get<int32_t>("grid_points"), "grid size");
  mp.basis_width = r.Get<double>("basis_width");
  mp.quad_substeps = Positive(r.Get<int32_t>("quad_substeps"), "substeps");

  diffusion::NoiseSchedule schedule;
  const int n_levels = Positive(r.Get<int32_t>("schedule size"), "schedule");
  schedule.epsilon = r.Get<double>("epsilon");
  schedule.t_max = r.Get<double>("t_max");
  schedule.rho = r.Get<double>("rho");
  for (int i = 0; i < n_levels; ++i) {
    schedule.levels.push_back(r.Get<double>("noise level"));
  }

  if (IsStudent(ck.role)) {
    consistency::ConsistencyConfig c;
    c.k = r.Get<int32_t>("k");
    c.mu = r.Get<double>("mu");
    c.gamma_d = r.Get<double>("gamma_d");
    c.beta = r.Get<double>("beta");
    c.c_out = EnumFrom<consistency::COutMode>(r.Get<uint8_t>("c_out"), 2,
                                              "c_out mode");
    c.metric =
        EnumFrom<consistency::Metric>(r.Get<uint8_t>("metric"), 2, "metric");
    c.weighting = EnumFrom<consistency::Weighting>(r.Get<uint8_t>("weighting"),
                                                   2, "weighting");
    c.steps = r.Get<int64_t>("steps");
    c.deploy_target = r.Get<uint8_t>("deploy_target") != 0;
    ck.consistency = c;
  }

  const uint32_t dim = r.Get<uint32_t>("normalizer dim");
  if (static_cast<int>(dim) != mp.dof) {
    throw ValidationError("checkpoint normalizer does not match dof");
  }
  Normalizer normalizer;
  normalizer.center.resize(dim);
  normalizer.half_range.resize(dim);
  for (uint32_t i = 0; i < dim; ++i) normalizer.center(i) = r.Get<double>("center");
  for (uint32_t i = 0; i < dim; ++i) {
    normalizer.half_range(i) = r.Get<double>("half_range");
  }

  try {
    mp.Validate();
    ck.pipeline = diffusion::MakePipeline(mp, head, horizon, obs_size,
                                          schedule, normalizer);
    const nn::NetLayout layout = nn::MakeLayout(
        head, horizon, mp.dof, mp.n_basis, obs_size, embed_size, sigma_data);
    ck.net = nn::InitNet(layout, hidden, 0, activation);
    if (ck.consistency) ck.consistency->Validate(schedule.size());
  } catch (const ConfigError& e) {
    throw ValidationError(std::string("checkpoint header is inconsistent: ") +
                          e.what());
  }

  const uint64_t count = r.Get<uint64_t>("parameter count");
  if (count != static_cast<uint64_t>(ck.net.ParameterCount())) {
    throw ValidationError("checkpoint parameter count " +
                          std::to_string(count) + " does not match layout (" +
                          std::to_string(ck.net.ParameterCount()) + ")");
  }
  Eigen::VectorXd flat(static_cast<Eigen::Index>(count));
  for (uint64_t i = 0; i < count; ++i) {
    flat(static_cast<Eigen::Index>(i)) = r.Get<float>("parameter");
  }
  if (r.remaining() != 0) {
    throw ValidationError("checkpoint has trailing bytes");
  }
  nn::SetParameters(ck.net, flat);
  return ck;
}

void SaveCheckpoint(const std::string& path, const Checkpoint& checkpoint) {
  const std::vector<uint8_t> bytes = SerializeCheckpoint(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint '" + path + "'");
}

Checkpoint LoadCheckpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint '" + path + "'");
  const std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  try {
    return DeserializeCheckpoint(bytes);
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

Checkpoint TeacherCheckpoint(const diffusion::TeacherModel& model) {
  Checkpoint ck;
  ck.role = model.pipeline.head == nn::HeadMode::kRaw
                ? CheckpointRole::kRawBaseline
                : CheckpointRole::kTeacher;
  ck.pipeline = model.pipeline;
  ck.net = model.net;
  return ck;
}

Checkpoint StudentCheckpoint(const consistency::StudentModel& student) {
  Checkpoint ck;
  ck.role = student.config.deploy_target ? CheckpointRole::kStudentTarget
                                         : CheckpointRole::kStudentOnline;
  ck.pipeline = student.pipeline;
  ck.net = student.deployed();
  ck.consistency = student.config;
  return ck;
}

diffusion::TeacherModel ToTeacher(const Checkpoint& checkpoint) {
  if (IsStudent(checkpoint.role)) {
    throw ValidationError("expected a teacher or raw-baseline checkpoint, got " +
                          ToString(checkpoint.role));
  }
  return {checkpoint.pipeline, checkpoint.net};
}

consistency::StudentModel ToStudent(const Checkpoint& checkpoint) {
  if (!IsStudent(checkpoint.role)) {
    throw ValidationError("expected a student checkpoint, got " +
                          ToString(checkpoint.role));
  }
  consistency::StudentModel s;
  s.pipeline = checkpoint.pipeline;
  s.online = checkpoint.net;
  s.target = checkpoint.net;
  s.config = *checkpoint.consistency;
  return s;
}

}  // namespace frmd
