#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "coopsim/errors.hpp"
#include "coopsim/scenario.hpp"

namespace coopsim {

// Point cloud container: "CPCL" | u32 version | u64 count |
// count * (f32 x, f32 y, f32 z, f32 intensity) | u32 crc32, all
// little-endian, crc over everything before it.
inline constexpr std::uint32_t kPcbinVersion = 1;

namespace detail {

inline void io_put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void io_put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void io_put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  io_put_u32(out, bits);
}

inline std::uint32_t io_crc(const std::string& bytes, std::size_t len) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()),
              static_cast<uInt>(len)));
}

}  // namespace detail

inline std::string encode_pcbin(const PointCloud& cloud) {
  std::string out;
  out.reserve(16 + cloud.points.size() * 16 + 4);
  out += "CPCL";
  detail::io_put_u32(out, kPcbinVersion);
  detail::io_put_u64(out, cloud.points.size());
  for (const auto& p : cloud.points) {
    detail::io_put_f32(out, static_cast<float>(p.x));
    detail::io_put_f32(out, static_cast<float>(p.y));
    detail::io_put_f32(out, static_cast<float>(p.z));
    detail::io_put_f32(out, static_cast<float>(p.intensity));
  }
  detail::io_put_u32(out, detail::io_crc(out, out.size()));
  return out;
}

inline PointCloud decode_pcbin(const std::string& bytes,
                               const std::string& label,
                               std::string frame_id) {
  auto u32_at = [&](std::size_t pos) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[pos + i]))
           << (8 * i);
    return v;
  };
  if (bytes.size() < 20) throw TruncatedError(label + ": too short");
  if (std::memcmp(bytes.data(), "CPCL", 4) != 0)
    throw DataError(label + ": bad magic, not a point cloud file");
  const std::uint32_t version = u32_at(4);
  if (version != kPcbinVersion)
    throw VersionError(label + ": unsupported version " +
                       std::to_string(version));
  std::uint64_t count = 0;
  for (int i = 0; i < 8; ++i)
    count |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(bytes[8 + i]))
             << (8 * i);
  const std::size_t expect = 16 + count * 16 + 4;
  if (bytes.size() != expect)
    throw TruncatedError(label + ": " + std::to_string(bytes.size()) +
                         " bytes, header implies " + std::to_string(expect));
  const std::uint32_t stored = u32_at(bytes.size() - 4);
  if (stored != detail::io_crc(bytes, bytes.size() - 4))
    throw ChecksumError(label + ": crc mismatch");

  PointCloud cloud;
  cloud.frame_id = std::move(frame_id);
  cloud.points.reserve(count);
  auto f32_at = [&](std::size_t pos) {
    const std::uint32_t b = u32_at(pos);
    float v;
    std::memcpy(&v, &b, 4);
    return static_cast<double>(v);
  };
  for (std::uint64_t k = 0; k < count; ++k) {
    const std::size_t base = 16 + k * 16;
    cloud.points.push_back({f32_at(base), f32_at(base + 4), f32_at(base + 8),
                            f32_at(base + 12)});
  }
  return cloud;
}

namespace detail {

inline void write_file(const std::filesystem::path& path,
                       const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return bytes;
}

inline nlohmann::json pose_json(const Pose& p) {
  return nlohmann::json::array({p.translation.x, p.translation.y,
                                p.translation.z, p.yaw, p.pitch, p.roll});
}

inline Pose pose_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 6)
    throw DataError("meta: pose must be a 6-element array");
  return Pose({j[0].get<double>(), j[1].get<double>(), j[2].get<double>()},
              j[3].get<double>(), j[4].get<double>(), j[5].get<double>());
}

inline nlohmann::json box_json(const OrientedBox& b) {
  return nlohmann::json::array({b.center.x, b.center.y, b.center.z, b.length,
                                b.width, b.height, b.yaw});
}

inline OrientedBox box_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 7)
    throw DataError("meta: box must be a 7-element array");
  return OrientedBox({j[0].get<double>(), j[1].get<double>(), j[2].get<double>()},
                     j[3].get<double>(), j[4].get<double>(), j[5].get<double>(),
                     j[6].get<double>());
}

inline nlohmann::json config_json(const ScenarioConfig& cfg) {
  return nlohmann::json{
      {"road_type", road_type_name(cfg.road_type)},
      {"n_vehicles", cfg.n_vehicles},
      {"n_cavs", cfg.n_cavs},
      {"duration_frames", cfg.duration_frames},
      {"traffic_speed_kmh", cfg.traffic_speed_kmh},
      {"aggressiveness", cfg.aggressiveness},
      {"seed", cfg.seed},
      {"ground_plane", cfg.ground_plane},
      {"sensor_mount_z", cfg.sensor_mount_z},
      {"lidar",
       {{"channels", cfg.lidar.channels},
        {"vertical_fov_min_deg", cfg.lidar.vertical_fov_min_deg},
        {"vertical_fov_max_deg", cfg.lidar.vertical_fov_max_deg},
        {"max_range_m", cfg.lidar.max_range_m},
        {"points_per_second", cfg.lidar.points_per_second},
        {"rotation_hz", cfg.lidar.rotation_hz},
        {"range_noise_sigma_m", cfg.lidar.range_noise_sigma_m}}},
      {"localization",
       {{"position_sigma_m", cfg.localization.position_sigma_m},
        {"heading_sigma_deg", cfg.localization.heading_sigma_deg}}}};
}

inline ScenarioConfig config_from_json(const nlohmann::json& j) {
  ScenarioConfig cfg;
  cfg.road_type = road_type_from_name(j.at("road_type").get<std::string>());
  cfg.n_vehicles = j.at("n_vehicles").get<int>();
  cfg.n_cavs = j.at("n_cavs").get<int>();
  cfg.duration_frames = j.at("duration_frames").get<int>();
  cfg.traffic_speed_kmh = j.at("traffic_speed_kmh").get<double>();
  cfg.aggressiveness = j.at("aggressiveness").get<double>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.ground_plane = j.at("ground_plane").get<bool>();
  cfg.sensor_mount_z = j.at("sensor_mount_z").get<double>();
  const auto& l = j.at("lidar");
  cfg.lidar.channels = l.at("channels").get<int>();
  cfg.lidar.vertical_fov_min_deg = l.at("vertical_fov_min_deg").get<double>();
  cfg.lidar.vertical_fov_max_deg = l.at("vertical_fov_max_deg").get<double>();
  cfg.lidar.max_range_m = l.at("max_range_m").get<double>();
  cfg.lidar.points_per_second = l.at("points_per_second").get<double>();
  cfg.lidar.rotation_hz = l.at("rotation_hz").get<double>();
  cfg.lidar.range_noise_sigma_m = l.at("range_noise_sigma_m").get<double>();
  const auto& n = j.at("localization");
  cfg.localization.position_sigma_m = n.at("position_sigma_m").get<double>();
  cfg.localization.heading_sigma_deg = n.at("heading_sigma_deg").get<double>();
  return cfg;
}

}  // namespace detail

// Directory layout per scenario:
//   meta.json                    config, ego, per-frame states and poses
//   frames/<t>/<cav_id>.pcbin    one cloud per connected vehicle
inline void write_scenario_dir(const Scenario& scenario,
                               const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  nlohmann::json meta;
  meta["format_version"] = 1;
  meta["config"] = detail::config_json(scenario.config);
  meta["ego_id"] = scenario.ego_id;
  nlohmann::json buildings = nlohmann::json::array();
  for (const auto& b : scenario.buildings)
    buildings.push_back(detail::box_json(b));
  meta["buildings"] = std::move(buildings);
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& frame : scenario.frames) {
    nlohmann::json jf;
    jf["timestamp_s"] = frame.timestamp_s;
    nlohmann::json vehicles = nlohmann::json::array();
    for (const auto& v : frame.vehicles) {
      vehicles.push_back({{"id", v.id},
                          {"box", detail::box_json(v.box)},
                          {"velocity",
                           nlohmann::json::array(
                               {v.velocity.x, v.velocity.y, v.velocity.z})}});
    }
    jf["vehicles"] = std::move(vehicles);
    jf["cav_ids"] = frame.cav_ids;
    nlohmann::json tp, np;
    for (const auto& [id, pose] : frame.true_poses)
      tp[std::to_string(id)] = detail::pose_json(pose);
    for (const auto& [id, pose] : frame.noisy_poses)
      np[std::to_string(id)] = detail::pose_json(pose);
    jf["true_poses"] = std::move(tp);
    jf["noisy_poses"] = std::move(np);
    frames.push_back(std::move(jf));
  }
  meta["frames"] = std::move(frames);
  detail::write_file(dir / "meta.json", meta.dump(2) + "\n");

  for (std::size_t t = 0; t < scenario.frames.size(); ++t) {
    const fs::path frame_dir = dir / "frames" / std::to_string(t);
    fs::create_directories(frame_dir);
    for (const auto& [cav, cloud] : scenario.frames[t].clouds) {
      detail::write_file(frame_dir / (std::to_string(cav) + ".pcbin"),
                         encode_pcbin(cloud));
    }
  }
}

inline Scenario read_scenario_dir(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const fs::path meta_path = dir / "meta.json";
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(detail::read_file(meta_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(meta_path.string() + ": " + e.what());
  }
  try {
    if (meta.at("format_version").get<int>() != 1)
      throw VersionError(meta_path.string() + ": unsupported format_version");
    Scenario scenario;
    scenario.config = detail::config_from_json(meta.at("config"));
    scenario.ego_id = meta.at("ego_id").get<int>();
    for (const auto& jb : meta.at("buildings"))
      scenario.buildings.push_back(detail::box_from_json(jb));
    for (const auto& jf : meta.at("frames")) {
      Frame frame;
      frame.timestamp_s = jf.at("timestamp_s").get<double>();
      for (const auto& jv : jf.at("vehicles")) {
        VehicleState v;
        v.id = jv.at("id").get<int>();
        v.box = detail::box_from_json(jv.at("box"));
        const auto& vel = jv.at("velocity");
        v.velocity = {vel[0].get<double>(), vel[1].get<double>(),
                      vel[2].get<double>()};
        frame.vehicles.push_back(v);
      }
      frame.cav_ids = jf.at("cav_ids").get<std::vector<int>>();
      for (const auto& [key, val] : jf.at("true_poses").items())
        frame.true_poses[std::stoi(key)] = detail::pose_from_json(val);
      for (const auto& [key, val] : jf.at("noisy_poses").items())
        frame.noisy_poses[std::stoi(key)] = detail::pose_from_json(val);
      scenario.frames.push_back(std::move(frame));
    }
    for (std::size_t t = 0; t < scenario.frames.size(); ++t) {
      Frame& frame = scenario.frames[t];
      for (int cav : frame.cav_ids) {
        const fs::path cloud_path =
            dir / "frames" / std::to_string(t) / (std::to_string(cav) + ".pcbin");
        frame.clouds[cav] = decode_pcbin(detail::read_file(cloud_path),
                                         cloud_path.string(),
                                         cav_frame_name(cav));
      }
    }
    return scenario;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(meta_path.string() + ": " + e.what());
  }
}

// Dataset root: manifest.json listing scenario directories in order.
inline void write_dataset(std::span<const Scenario> scenarios,
                          const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  fs::create_directories(root);
  nlohmann::json manifest;
  manifest["format_version"] = 1;
  nlohmann::json list = nlohmann::json::array();
  for (std::size_t k = 0; k < scenarios.size(); ++k) {
    const std::string name = "scenario_" + std::to_string(k);
    write_scenario_dir(scenarios[k], root / name);
    list.push_back({{"dir", name},
                    {"road_type", road_type_name(scenarios[k].config.road_type)},
                    {"seed", scenarios[k].config.seed},
                    {"frames", scenarios[k].config.duration_frames},
                    {"n_cavs", scenarios[k].config.n_cavs}});
  }
  manifest["scenarios"] = std::move(list);
  detail::write_file(root / "manifest.json", manifest.dump(2) + "\n");
}

inline void write_dataset(const Scenario& scenario,
                          const std::filesystem::path& root) {
  write_dataset(std::span<const Scenario>(&scenario, 1), root);
}

inline std::vector<Scenario> read_dataset(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  const fs::path manifest_path = root / "manifest.json";
  if (!fs::exists(manifest_path))
    throw DataError("missing manifest: " + manifest_path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(detail::read_file(manifest_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(manifest_path.string() + ": " + e.what());
  }
  try {
    if (manifest.at("format_version").get<int>() != 1)
      throw VersionError(manifest_path.string() +
                         ": unsupported format_version");
    std::vector<Scenario> out;
    for (const auto& entry : manifest.at("scenarios"))
      out.push_back(
          read_scenario_dir(root / entry.at("dir").get<std::string>()));
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(manifest_path.string() + ": " + e.what());
  }
}

}  // namespace coopsim
