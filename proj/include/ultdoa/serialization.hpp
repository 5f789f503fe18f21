#pragma once

#include <json.hpp>

#include "ultdoa/protocol.hpp"

namespace ultdoa {

inline void to_json(nlohmann::json& j, const Position3D& p)
{
  j = {{"x", p.x}, {"y", p.y}, {"z", p.z}};
}

inline void from_json(const nlohmann::json& j, Position3D& p)
{
  j.at("x").get_to(p.x);
  j.at("y").get_to(p.y);
  j.at("z").get_to(p.z);
}

inline void to_json(nlohmann::json& j, const Plmn& plmn)
{
  j = {{"mcc", plmn.mcc}, {"mnc", plmn.mnc}};
}

inline void from_json(const nlohmann::json& j, Plmn& plmn)
{
  j.at("mcc").get_to(plmn.mcc);
  j.at("mnc").get_to(plmn.mnc);
}

inline void to_json(nlohmann::json& j, const Ncgi& ncgi)
{
  j = {{"plmn", ncgi.plmn}, {"nci", ncgi.nci}};
}

inline void from_json(const nlohmann::json& j, Ncgi& ncgi)
{
  j.at("plmn").get_to(ncgi.plmn);
  j.at("nci").get_to(ncgi.nci);
}

inline void to_json(nlohmann::json& j, const PeriodicEventInfo& info)
{
  j = {{"amount", info.amount}, {"interval_s", info.interval_s}};
}

inline void from_json(const nlohmann::json& j, PeriodicEventInfo& info)
{
  j.at("amount").get_to(info.amount);
  j.at("interval_s").get_to(info.interval_s);
}

inline void to_json(nlohmann::json& j, const InputData& input)
{
  j = {{"supi", input.supi}, {"ncgi", input.ncgi}};
  if (input.periodic_event_info)
    j["periodic_event_info"] = *input.periodic_event_info;
}

inline void from_json(const nlohmann::json& j, InputData& input)
{
  j.at("supi").get_to(input.supi);
  j.at("ncgi").get_to(input.ncgi);
  input.periodic_event_info.reset();
  if (j.contains("periodic_event_info") && !j.at("periodic_event_info").is_null())
    input.periodic_event_info = j.at("periodic_event_info").get<PeriodicEventInfo>();
}

inline void to_json(nlohmann::json& j, const GeographicCoordinates& geo)
{
  j = {{"latitude_deg", geo.latitude_deg}, {"longitude_deg", geo.longitude_deg}, {"altitude_m", geo.altitude_m}};
}

inline void from_json(const nlohmann::json& j, GeographicCoordinates& geo)
{
  j.at("latitude_deg").get_to(geo.latitude_deg);
  j.at("longitude_deg").get_to(geo.longitude_deg);
  j.at("altitude_m").get_to(geo.altitude_m);
}

inline void to_json(nlohmann::json& j, const LocationData& location)
{
  j = nlohmann::json::object();
  j["cartesian"] = location.cartesian;
  if (location.geographic)
    j["geographic"] = *location.geographic;
}

inline void from_json(const nlohmann::json& j, LocationData& location)
{
  location.geographic.reset();
  const bool has_cartesian = j.contains("cartesian") && !j.at("cartesian").is_null();
  const bool has_geographic = j.contains("geographic") && !j.at("geographic").is_null();
  if (!has_cartesian && !has_geographic)
    throw std::invalid_argument("LocationData needs a cartesian or geographic member");
  if (has_cartesian)
    j.at("cartesian").get_to(location.cartesian);
  if (has_geographic)
    location.geographic = j.at("geographic").get<GeographicCoordinates>();
}

inline void to_json(nlohmann::json& j, const TrpInformation& trp)
{
  j = {{"trp_id", trp.trp_id}, {"plmn", trp.plmn}, {"location", trp.location}, {"uncertainty_m", trp.uncertainty_m}};
}

inline void from_json(const nlohmann::json& j, TrpInformation& trp)
{
  j.at("trp_id").get_to(trp.trp_id);
  if (j.contains("plmn"))
    j.at("plmn").get_to(trp.plmn);
  j.at("location").get_to(trp.location);
  trp.uncertainty_m = j.value("uncertainty_m", 0.0);
}

inline void to_json(nlohmann::json& j, const ToaMeasurement& m)
{
  j = {{"trp_id", m.trp_id},
       {"toa_s", m.toa_s},
       {"peak_index", m.peak_index},
       {"ul_rtoa_index", m.ul_rtoa_index},
       {"rsrp_dbfs", m.rsrp_dbfs},
       {"rx_tx_diff_s", m.rx_tx_diff_s}};
}

}  // namespace ultdoa
