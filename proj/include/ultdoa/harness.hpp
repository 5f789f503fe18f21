#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ultdoa/protocol.hpp"
#include "ultdoa/serialization.hpp"

namespace ultdoa {

struct ScenarioChannel {
  double noise_std = 0.0;
  std::optional<double> snr_db;  // overrides noise_std when present
  std::uint64_t seed = 1;
  std::vector<PathComponent> extra_paths;  // delays relative to the line of sight
};

struct ScenarioGnb {
  std::uint32_t gnb_id = 0;
  Plmn plmn;
  std::uint64_t nci = 0;
  std::vector<TrpInformation> trps;
};

struct ScenarioUe {
  std::string supi;
  Position3D truth;
  std::uint32_t serving_gnb = 0;
};

struct ScenarioConfig {
  std::vector<ScenarioGnb> gnbs;
  ScenarioUe ue;
  SrsConfig srs;
  unsigned zc_root = 1;
  ScenarioChannel channel;
  LmfConfig solver;
  int rtoa_k = 0;

  void validate() const
  {
    if (gnbs.empty())
      throw std::invalid_argument("scenario needs at least one gNB");
    std::size_t total_trps = 0;
    std::set<std::uint32_t> gnb_ids;
    std::set<std::uint32_t> trp_ids;
    bool serving_found = false;
    for (const auto& gnb : gnbs) {
      if (!gnb_ids.insert(gnb.gnb_id).second)
        throw std::invalid_argument("duplicate gnb_id " + std::to_string(gnb.gnb_id));
      validate_plmn(gnb.plmn);
      if (gnb.gnb_id == ue.serving_gnb)
        serving_found = true;
      for (const auto& trp : gnb.trps) {
        if (trp.trp_id == 0)
          throw std::invalid_argument("trp_id 0 is reserved for broadcast requests");
        if (!trp_ids.insert(trp.trp_id).second)
          throw std::invalid_argument("duplicate trp_id " + std::to_string(trp.trp_id));
        if (!(trp.uncertainty_m >= 0.0))
          throw std::invalid_argument("TRP uncertainty must be nonnegative");
        ++total_trps;
      }
    }
    if (total_trps < 3)
      throw std::invalid_argument("scenario needs at least three TRPs for multilateration");
    if (!all_digits(ue.supi))
      throw std::invalid_argument("UE SUPI must be a nonempty digit string");
    if (!serving_found)
      throw std::invalid_argument("ue.serving_gnb does not name a configured gNB");
    srs.validate();
    const std::size_t n_zc = zadoff_chu_length(srs.m_sc);
    if (zc_root == 0 || zc_root >= n_zc)
      throw std::invalid_argument("zc_root must lie in [1, N_ZC)");
    if (rtoa_k < kUlRtoaKMin || rtoa_k > kUlRtoaKMax)
      throw std::invalid_argument("rtoa_k must lie in [0, 5]");
    if (!(channel.noise_std >= 0.0))
      throw std::invalid_argument("channel noise_std must be nonnegative");
    for (const auto& p : channel.extra_paths)
      if (!(p.delay_s >= 0.0))
        throw std::invalid_argument("extra path delays must be nonnegative");
  }

  double resolved_noise_std() const
  {
    if (channel.snr_db)
      return std::sqrt(0.5 * std::pow(10.0, -*channel.snr_db / 10.0));
    return channel.noise_std;
  }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x)
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b)
{
  return splitmix64(splitmix64(master + a) + b);
}

}  // namespace detail

inline ScenarioConfig parse_scenario(const nlohmann::json& j)
{
  ScenarioConfig cfg;
  if (j.contains("srs")) {
    const auto& s = j.at("srs");
    static const std::set<std::string> known{"k_tc",       "m_sc",         "n_sc", "n_fft",
                                             "k0",         "n_symb_srs",   "p_rx", "oversampling",
                                             "sample_rate_msps"};
    for (const auto& item : s.items()) {
      if (item.key() == "n_rx")
        throw std::invalid_argument("srs.n_rx is derived from each gNB's TRP list");
      if (known.find(item.key()) == known.end())
        throw std::invalid_argument("unknown srs field: " + item.key());
    }
    cfg.srs.k_tc = s.value("k_tc", cfg.srs.k_tc);
    cfg.srs.m_sc = s.value("m_sc", cfg.srs.m_sc);
    cfg.srs.n_sc = s.value("n_sc", cfg.srs.n_sc);
    cfg.srs.n_fft = s.value("n_fft", cfg.srs.n_fft);
    cfg.srs.k0 = s.value("k0", cfg.srs.k0);
    cfg.srs.n_symb_srs = s.value("n_symb_srs", cfg.srs.n_symb_srs);
    cfg.srs.p_rx = s.value("p_rx", cfg.srs.p_rx);
    cfg.srs.oversampling = s.value("oversampling", cfg.srs.oversampling);
    if (s.contains("sample_rate_msps"))
      cfg.srs.sample_period_s = 1.0 / (s.at("sample_rate_msps").get<double>() * 1e6);
  }
  cfg.zc_root = j.value("zc_root", cfg.zc_root);
  cfg.rtoa_k = j.value("rtoa_k", cfg.rtoa_k);

  if (j.contains("channel")) {
    const auto& c = j.at("channel");
    cfg.channel.noise_std = c.value("noise_std", 0.0);
    if (c.contains("snr_db") && !c.at("snr_db").is_null())
      cfg.channel.snr_db = c.at("snr_db").get<double>();
    cfg.channel.seed = c.value("seed", cfg.channel.seed);
    if (c.contains("extra_paths"))
      for (const auto& p : c.at("extra_paths")) {
        PathComponent path;
        path.delay_s = p.at("delay_s").get<double>();
        const auto& g = p.at("gain");
        path.gain = {g.at(0).get<double>(), g.at(1).get<double>()};
        cfg.channel.extra_paths.push_back(path);
      }
  }

  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    cfg.solver.fixed_z = s.value("fixed_z", cfg.solver.fixed_z);
    cfg.solver.nlls_tol_m = s.value("tolerance_m", cfg.solver.nlls_tol_m);
    cfg.solver.nlls_max_iter = s.value("max_iterations", cfg.solver.nlls_max_iter);
    cfg.solver.timeout_s = s.value("timeout_s", cfg.solver.timeout_s);
  }

  for (const auto& g : j.at("gnbs")) {
    ScenarioGnb gnb;
    gnb.gnb_id = g.at("gnb_id").get<std::uint32_t>();
    if (g.contains("plmn"))
      g.at("plmn").get_to(gnb.plmn);
    gnb.nci = g.value("nci", static_cast<std::uint64_t>(gnb.gnb_id));
    for (const auto& t : g.at("trps")) {
      TrpInformation trp = t.get<TrpInformation>();
      if (!t.contains("plmn"))
        trp.plmn = gnb.plmn;
      gnb.trps.push_back(trp);
    }
    cfg.gnbs.push_back(std::move(gnb));
  }

  const auto& u = j.at("ue");
  u.at("supi").get_to(cfg.ue.supi);
  u.at("position").get_to(cfg.ue.truth);
  cfg.ue.serving_gnb = u.at("serving_gnb").get<std::uint32_t>();

  cfg.validate();
  return cfg;
}

inline ScenarioConfig load_scenario(const std::string& path)
{
  std::ifstream file(path);
  if (!file)
    throw std::runtime_error("cannot open scenario file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(file);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("scenario " + path + ": " + e.what());
  }
  try {
    return parse_scenario(j);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("scenario " + path + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error("scenario " + path + ": " + e.what());
  }
}

inline std::string gnb_entity_id(std::uint32_t gnb_id)
{
  return "gnb-" + std::to_string(gnb_id);
}

// Instantiates the simulated deployment for one UE position: per-gNB uplink
// captures with geometric line-of-sight delays, optional extra paths and
// noise, plus the AMF registry the procedure routes through.
inline PositioningWorld build_world(const ScenarioConfig& cfg, const Position3D& ue_position, std::uint64_t seed)
{
  cfg.validate();
  PositioningWorld world;
  world.lmf = cfg.solver;
  const double noise_std = cfg.resolved_noise_std();

  for (const auto& gnb_cfg : cfg.gnbs) {
    GnbEntity gnb;
    gnb.entity_id = gnb_entity_id(gnb_cfg.gnb_id);
    gnb.gnb_id = gnb_cfg.gnb_id;
    gnb.plmn = gnb_cfg.plmn;
    gnb.trps = gnb_cfg.trps;
    gnb.rtoa_k = cfg.rtoa_k;

    SrsConfig srs = cfg.srs;
    srs.n_rx = gnb_cfg.trps.empty() ? 1 : gnb_cfg.trps.size();
    srs.validate();
    gnb.srs_ie = {srs, 1};
    gnb.pilot = generate_srs_sequence(srs, cfg.zc_root);

    if (!gnb_cfg.trps.empty()) {
      const ResourceGrid tx = map_to_grid(srs, gnb.pilot);
      std::vector<ChannelModel> models;
      models.reserve(gnb_cfg.trps.size());
      for (std::size_t t = 0; t < gnb_cfg.trps.size(); ++t) {
        ChannelModel model;
        const double los = geometric_delay(gnb_cfg.trps[t].location, ue_position);
        model.paths.push_back({los, {1.0, 0.0}});
        for (const auto& extra : cfg.channel.extra_paths)
          model.paths.push_back({los + extra.delay_s, extra.gain});
        model.noise_std = noise_std;
        model.seed = detail::derive_seed(seed, gnb_cfg.gnb_id, t);
        models.push_back(std::move(model));
      }
      gnb.rx = apply_channels(tx, srs, models);
    }

    world.registry.gnbs.push_back(gnb.entity_id);
    world.gnbs.push_back(std::move(gnb));
  }

  world.registry.serving[cfg.ue.supi] = gnb_entity_id(cfg.ue.serving_gnb);
  world.gnb(gnb_entity_id(cfg.ue.serving_gnb)).serving_supi = cfg.ue.supi;
  return world;
}

inline InputData scenario_input(const ScenarioConfig& cfg)
{
  InputData input;
  input.supi = cfg.ue.supi;
  for (const auto& gnb : cfg.gnbs)
    if (gnb.gnb_id == cfg.ue.serving_gnb)
      input.ncgi = {gnb.plmn, gnb.nci};
  return input;
}

struct GridPoint {
  std::string label;
  Position3D position;
};

inline std::vector<GridPoint> load_points(const std::string& path, double default_z)
{
  std::ifstream file(path);
  if (!file)
    throw std::runtime_error("cannot open points file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(file);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("points " + path + ": " + e.what());
  }
  const nlohmann::json& arr = j.is_array() ? j : j.at("points");
  std::vector<GridPoint> points;
  for (const auto& p : arr) {
    GridPoint point;
    point.label = p.at("label").get<std::string>();
    point.position.x = p.at("x").get<double>();
    point.position.y = p.at("y").get<double>();
    point.position.z = p.value("z", default_z);
    points.push_back(std::move(point));
  }
  if (points.empty())
    throw std::runtime_error("points " + path + ": no points defined");
  return points;
}

inline double horizontal_error_m(const Position3D& truth, const Position3D& estimate)
{
  return std::hypot(truth.x - estimate.x, truth.y - estimate.y);
}

struct RunRow {
  std::string label;
  Position3D truth;
  Position3D estimate;
  double error_m = 0.0;
  std::vector<double> toas_s;
  std::vector<double> tdoas_s;
  std::string trace_ref;
  ProcedureTrace trace;
  std::optional<std::string> error_message;
};

struct RunReport {
  std::vector<RunRow> rows;
};

// One isolated world per grid point; point seeds derive from the master seed
// so a report is reproducible as a whole.
inline RunReport run_end_to_end(const ScenarioConfig& cfg, const std::vector<GridPoint>& points,
                                std::uint64_t seed)
{
  cfg.validate();
  RunReport report;
  for (std::size_t i = 0; i < points.size(); ++i) {
    RunRow row;
    row.label = points[i].label;
    row.truth = points[i].position;
    row.trace_ref = points[i].label;
    try {
      PositioningWorld world = build_world(cfg, points[i].position, detail::derive_seed(seed, i, 0));
      const InputData input = scenario_input(cfg);
      ProcedureResult result = lmf_run_procedure(input, world);
      row.estimate = result.location.cartesian;
      row.error_m = horizontal_error_m(row.truth, row.estimate);
      for (const auto& m : result.measurements)
        row.toas_s.push_back(m.toa_s);
      for (const auto& e : result.tdoas.entries)
        row.tdoas_s.push_back(e.tdoa_s);
      row.trace = std::move(result.trace);
    } catch (const std::exception& e) {
      row.estimate = {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(),
                      std::numeric_limits<double>::quiet_NaN()};
      row.error_m = std::numeric_limits<double>::quiet_NaN();
      row.error_message = e.what();
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

enum class ReportFormat { csv, text };

inline ReportFormat parse_report_format(const std::string& name)
{
  if (name == "csv")
    return ReportFormat::csv;
  if (name == "text")
    return ReportFormat::text;
  throw std::invalid_argument("unknown report format: " + name);
}

inline std::string render_report(const RunReport& report, ReportFormat format)
{
  if (report.rows.empty())
    throw std::invalid_argument("cannot render an empty report");

  std::ostringstream out;
  char buf[64];
  if (format == ReportFormat::csv) {
    out << "label,truth_x,truth_y,est_x,est_y,error_m\n";
    for (const auto& row : report.rows) {
      std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f,%.6f", row.truth.x, row.truth.y, row.estimate.x,
                    row.estimate.y, row.error_m);
      out << row.label << ',' << buf << '\n';
    }
    return out.str();
  }

  std::size_t width = 5;
  for (const auto& row : report.rows)
    width = std::max(width, row.label.size());
  out << "Point";
  out << std::string(width - 4, ' ') << "Error (m)\n";
  for (const auto& row : report.rows) {
    out << row.label << std::string(width - row.label.size() + 1, ' ');
    if (row.error_message) {
      out << "failed: " << *row.error_message << '\n';
    } else {
      std::snprintf(buf, sizeof(buf), "%.4f", row.error_m);
      out << buf << '\n';
    }
  }
  return out.str();
}

inline void emit_report(const RunReport& report, const std::string& path, ReportFormat format)
{
  const std::string body = render_report(report, format);
  std::ofstream file(path);
  if (!file)
    throw std::runtime_error("cannot write report file: " + path);
  file << body;
  if (!file.good())
    throw std::runtime_error("failed while writing report file: " + path);
}

}  // namespace ultdoa
