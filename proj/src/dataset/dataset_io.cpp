#include "comrl/dataset/dataset.hpp"

#include "comrl/ndmath/binary_io.hpp"

#include "json.hpp"

namespace comrl::dataset {

using nd::FormatErrc;
using nd::FormatError;

std::string task_to_json(const envs::TaskSpec& task) {
  nlohmann::json j;
  j["family"] = std::string(envs::to_string(task.family));
  j["goal"] = task.goal;
  j["mass"] = task.mass;
  j["friction"] = task.friction;
  j["task_id"] = task.task_id;
  return j.dump();
}

envs::TaskSpec task_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    envs::TaskSpec t;
    t.family = envs::parse_family(j.at("family").get<std::string>());
    t.goal = j.at("goal").get<double>();
    t.mass = j.at("mass").get<double>();
    t.friction = j.at("friction").get<double>();
    t.task_id = j.at("task_id").get<int>();
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatErrc::bad_metadata, e.what());
  } catch (const ConfigError& e) {
    throw FormatError(FormatErrc::bad_metadata, e.what());
  }
}

void write_dataset(const OfflineTaskDataset& ds, const std::filesystem::path& path) {
  nd::BinaryWriter w;
  w.raw("COMR");
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(ds.state_dim()));
  w.u32(static_cast<std::uint32_t>(ds.action_dim()));
  w.u32(static_cast<std::uint32_t>(ds.size()));
  w.blob(task_to_json(ds.task()));
  for (double v : ds.raw()) w.f64(v);
  w.save(path);
}

OfflineTaskDataset read_dataset(const std::filesystem::path& path) {
  nd::BinaryReader r = nd::BinaryReader::load(path);
  if (r.remaining() < 4 || r.raw(4) != "COMR") throw FormatError(FormatErrc::bad_magic, path.string());
  const std::uint32_t version = r.u32();
  if (version != kDatasetVersion) {
    throw FormatError(FormatErrc::version_mismatch, "dataset version " + std::to_string(version));
  }
  const std::uint32_t state_dim = r.u32();
  const std::uint32_t action_dim = r.u32();
  const std::uint32_t n = r.u32();
  const envs::TaskSpec task = task_from_json(r.blob());
  if (state_dim != envs::kStateDim || action_dim != envs::kActionDim) {
    throw FormatError(FormatErrc::dim_mismatch, "state/action dims " + std::to_string(state_dim) + "/" +
                                                    std::to_string(action_dim) + " do not match family " +
                                                    std::string(envs::to_string(task.family)));
  }
  OfflineTaskDataset ds(task, state_dim, action_dim);
  const std::size_t count = static_cast<std::size_t>(n) * ds.record_width();
  if (r.remaining() < count * 8) {
    throw FormatError(FormatErrc::truncated, "header claims " + std::to_string(n) + " transitions, body holds " +
                                                 std::to_string(r.remaining() / (8 * ds.record_width())));
  }
  if (r.remaining() > count * 8) {
    throw FormatError(FormatErrc::dim_mismatch, std::to_string(r.remaining() - count * 8) + " trailing bytes");
  }
  auto& data = ds.mutable_raw();
  data.resize(count);
  for (double& v : data) v = r.f64();
  return ds;
}

}  // namespace comrl::dataset
