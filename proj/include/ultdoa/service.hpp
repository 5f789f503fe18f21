#pragma once

#include <httplib.h>

// glibc's resolver header (dragged in by httplib) leaks a _res object-like
// macro that mangles Eigen parameter names in any header included later.
#ifdef _res
#undef _res
#endif

#include <string>

#include "ultdoa/harness.hpp"

namespace ultdoa {

inline constexpr const char* kDetermineLocationPath = "/nlmf-loc/v1/determine-location";
inline constexpr int kDefaultServicePort = 8080;

// HTTP front end of the location procedure. Each request runs an isolated
// world seeded from the scenario, so responses are deterministic.
class LocationService {
 public:
  explicit LocationService(ScenarioConfig cfg) : cfg_(std::move(cfg))
  {
    cfg_.validate();
    install_routes();
  }

  const ScenarioConfig& scenario() const { return cfg_; }

  int bind_any(const std::string& host = "127.0.0.1")
  {
    const int port = server_.bind_to_any_port(host);
    if (port <= 0)
      throw std::runtime_error("cannot bind the location service on " + host);
    return port;
  }

  bool serve_after_bind() { return server_.listen_after_bind(); }

  void listen(const std::string& host, int port)
  {
    if (!server_.listen(host, port))
      throw std::runtime_error("cannot bind the location service on " + host + ":" + std::to_string(port));
  }

  void stop() { server_.stop(); }

 private:
  static void reply_problem(httplib::Response& res, int status, const std::string& title, const std::string& detail)
  {
    res.status = status;
    res.set_content(nlohmann::json{{"title", title}, {"detail", detail}}.dump(), "application/json");
  }

  void install_routes()
  {
    server_.Post(kDetermineLocationPath, [this](const httplib::Request& req, httplib::Response& res) {
      InputData input;
      try {
        input = nlohmann::json::parse(req.body).get<InputData>();
        if (!all_digits(input.supi))
          throw std::invalid_argument("supi must be a nonempty digit string");
      } catch (const std::exception& e) {
        reply_problem(res, 400, "Malformed InputData", e.what());
        return;
      }
      if (input.supi != cfg_.ue.supi) {
        reply_problem(res, 404, "Unknown SUPI", "no UE with SUPI " + input.supi + " is deployed");
        return;
      }
      try {
        PositioningWorld world = build_world(cfg_, cfg_.ue.truth, cfg_.channel.seed);
        const ProcedureResult result = lmf_run_procedure(input, world);
        res.status = 200;
        res.set_content(nlohmann::json(result.location).dump(), "application/json");
      } catch (const std::exception& e) {
        reply_problem(res, 500, "Positioning procedure failed", e.what());
      }
    });
  }

  ScenarioConfig cfg_;
  httplib::Server server_;
};

// Blocking entry point used by the CLI.
inline void serve_determine_location(const ScenarioConfig& cfg, const std::string& bind_address = "0.0.0.0",
                                     int port = kDefaultServicePort)
{
  LocationService service(cfg);
  service.listen(bind_address, port);
}

}  // namespace ultdoa
