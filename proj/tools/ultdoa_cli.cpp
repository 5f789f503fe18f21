#include <cinttypes>
#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ultdoa/ultdoa.hpp"

namespace {

int cmd_run(const std::string& scenario_path, const std::string& points_path, std::uint64_t seed,
            const std::string& report_path, const std::string& format_name, const std::string& trace_dir)
{
  const auto cfg = ultdoa::load_scenario(scenario_path);

  std::vector<ultdoa::GridPoint> points;
  if (points_path.empty())
    points.push_back({"UE", cfg.ue.truth});
  else
    points = ultdoa::load_points(points_path, cfg.solver.fixed_z);

  const auto report = ultdoa::run_end_to_end(cfg, points, seed);
  const auto format = ultdoa::parse_report_format(format_name);
  if (report_path.empty())
    std::cout << ultdoa::render_report(report, format);
  else
    ultdoa::emit_report(report, report_path, format);

  if (!trace_dir.empty())
    for (const auto& row : report.rows)
      if (!row.error_message)
        ultdoa::write_trace(row.trace, trace_dir + "/" + row.label + ".trace");

  int failures = 0;
  for (const auto& row : report.rows)
    if (row.error_message) {
      std::cerr << "point " << row.label << " failed: " << *row.error_message << "\n";
      ++failures;
    }
  return failures == 0 ? 0 : 1;
}

int cmd_serve(const std::string& scenario_path, const std::string& bind_address, int port)
{
  const auto cfg = ultdoa::load_scenario(scenario_path);
  std::cout << "serving POST " << ultdoa::kDetermineLocationPath << " on " << bind_address << ":" << port
            << " for SUPI " << cfg.ue.supi << "\n";
  ultdoa::serve_determine_location(cfg, bind_address, port);
  return 0;
}

int cmd_estimate_toa(const std::string& scenario_path, std::uint64_t seed)
{
  const auto cfg = ultdoa::load_scenario(scenario_path);
  auto world = ultdoa::build_world(cfg, cfg.ue.truth, seed);

  std::printf("%6s %14s %14s %12s %10s\n", "trp", "geometric_ns", "estimated_ns", "ul_rtoa", "rsrp_dbfs");
  for (auto& gnb : world.gnbs) {
    ultdoa::NrppaPdu request{1, ultdoa::RoutingScope::non_ue(),
                             ultdoa::MeasurementRequest{0, gnb.srs_ie, ultdoa::kMeasurementRnti}};
    const auto replies = gnb.handle(request);
    for (const auto& reply : replies) {
      const auto& m = std::get<ultdoa::MeasurementResponse>(reply.body);
      const ultdoa::TrpInformation* trp = nullptr;
      for (const auto& t : gnb.trps)
        if (t.trp_id == m.trp_id)
          trp = &t;
      const double geometric = trp ? ultdoa::geometric_delay(trp->location, cfg.ue.truth) : 0.0;
      const double estimated = ultdoa::dequantize_ul_rtoa(m.ul_rtoa_index, m.k);
      std::printf("%6u %14.3f %14.3f %12" PRIu64 " %10.2f\n", m.trp_id, geometric * 1e9, estimated * 1e9,
                  m.ul_rtoa_index, m.rsrp_dbfs);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv)
{
  CLI::App app{"UL-TDoA positioning simulator"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::string points_path;
  std::string report_path;
  std::string format_name = "text";
  std::string trace_dir;
  std::string bind_address = "0.0.0.0";
  std::uint64_t seed = 1;
  int port = ultdoa::kDefaultServicePort;

  auto* run = app.add_subcommand("run", "run the positioning procedure over ground-truth points");
  run->add_option("--scenario", scenario_path, "scenario file")->required();
  run->add_option("--points", points_path, "ground-truth points file (defaults to the scenario UE position)");
  run->add_option("--seed", seed, "master seed for the synthesized channels");
  run->add_option("--report", report_path, "write the report here instead of stdout");
  run->add_option("--format", format_name, "report format: csv or text");
  run->add_option("--trace-dir", trace_dir, "write one message trace per point into this directory");

  auto* serve = app.add_subcommand("serve", "expose determine-location over HTTP");
  serve->add_option("--scenario", scenario_path, "scenario file")->required();
  serve->add_option("--port", port, "listen port");
  serve->add_option("--bind", bind_address, "bind address");

  auto* estimate = app.add_subcommand("estimate-toa", "print per-TRP arrival estimates for the scenario");
  estimate->add_option("--scenario", scenario_path, "scenario file")->required();
  estimate->add_option("--seed", seed, "master seed for the synthesized channels");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed())
      return cmd_run(scenario_path, points_path, seed, report_path, format_name, trace_dir);
    if (serve->parsed())
      return cmd_serve(scenario_path, bind_address, port);
    return cmd_estimate_toa(scenario_path, seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
