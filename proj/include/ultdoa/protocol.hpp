#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "ultdoa/estimator.hpp"
#include "ultdoa/locator.hpp"

namespace ultdoa {

struct ProtocolError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TimeoutError : ProtocolError {
  using ProtocolError::ProtocolError;
};
struct InsufficientMeasurementsError : ProtocolError {
  using ProtocolError::ProtocolError;
};

inline bool all_digits(const std::string& s)
{
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c) != 0; });
}

struct Plmn {
  std::string mcc = "001";
  std::string mnc = "01";
};

inline void validate_plmn(const Plmn& plmn)
{
  if (plmn.mcc.size() != 3 || !all_digits(plmn.mcc))
    throw std::invalid_argument("MCC must be exactly three digits");
  if ((plmn.mnc.size() != 2 && plmn.mnc.size() != 3) || !all_digits(plmn.mnc))
    throw std::invalid_argument("MNC must be two or three digits");
}

struct Ncgi {
  Plmn plmn;
  std::uint64_t nci = 0;
};

struct TrpInformation {
  std::uint32_t trp_id = 0;
  Plmn plmn;
  Position3D location;
  double uncertainty_m = 0.0;
};

struct SrsConfigurationIe {
  SrsConfig srs;
  std::uint32_t srs_resource_set_id = 1;
};

struct TrpInformationRequest {};
struct TrpInformationResponse {
  std::vector<TrpInformation> trps;
};
struct PositioningInformationRequest {
  std::string requested_srs;
};
struct PositioningInformationResponse {
  SrsConfigurationIe srs;
};
struct PositioningActivationRequest {
  std::uint32_t srs_resource_set_id = 1;
  std::uint32_t srs_resource_trigger = 1;
};
struct PositioningActivationResponse {
  std::optional<std::string> criticality_diagnostics;
  std::uint32_t sfn = 0;
  std::uint32_t slot = 0;
};
struct MeasurementRequest {
  std::uint32_t trp_id = 0;  // 0 selects every TRP of the addressed gNB
  SrsConfigurationIe srs;
  std::uint32_t measurement_rnti = 0;
};
struct MeasurementResponse {
  std::uint32_t trp_id = 0;
  std::uint64_t ul_rtoa_index = 0;
  int k = 0;
  double rx_tx_diff_s = 0.0;
  double rsrp_dbfs = 0.0;
};

// Request/response alternatives are interleaved so that the paired response
// of body index i is always index i + 1.
using NrppaBody = std::variant<TrpInformationRequest, TrpInformationResponse, PositioningInformationRequest,
                               PositioningInformationResponse, PositioningActivationRequest,
                               PositioningActivationResponse, MeasurementRequest, MeasurementResponse>;

struct RoutingScope {
  bool ue_associated = false;
  std::string supi;

  static RoutingScope non_ue() { return {}; }
  static RoutingScope ue(std::string supi) { return {true, std::move(supi)}; }
};

struct NrppaPdu {
  std::uint64_t transaction_id = 0;
  RoutingScope scope;
  NrppaBody body;
};

inline const char* message_type_name(const NrppaPdu& pdu)
{
  static constexpr const char* kNames[] = {
      "TrpInformationRequest",          "TrpInformationResponse",
      "PositioningInformationRequest",  "PositioningInformationResponse",
      "PositioningActivationRequest",   "PositioningActivationResponse",
      "MeasurementRequest",             "MeasurementResponse",
  };
  return kNames[pdu.body.index()];
}

inline bool is_request(const NrppaPdu& pdu)
{
  return pdu.body.index() % 2 == 0;
}

enum class HopLabel {
  namf_non_ue_n2_transfer,
  namf_n1n2_transfer,
  namf_non_ue_n2_notify,
  namf_n2_notify,
  ngap_dl_non_ue,
  ngap_ul_non_ue,
  ngap_dl_ue,
  ngap_ul_ue,
};

inline const char* to_string(HopLabel label)
{
  switch (label) {
    case HopLabel::namf_non_ue_n2_transfer: return "Namf_NonUE_N2_Transfer";
    case HopLabel::namf_n1n2_transfer: return "Namf_N1N2_Transfer";
    case HopLabel::namf_non_ue_n2_notify: return "Namf_NonUE_N2_Notify";
    case HopLabel::namf_n2_notify: return "Namf_N2_Notify";
    case HopLabel::ngap_dl_non_ue: return "NGAP_DL_NonUE";
    case HopLabel::ngap_ul_non_ue: return "NGAP_UL_NonUE";
    case HopLabel::ngap_dl_ue: return "NGAP_DL_UE";
    case HopLabel::ngap_ul_ue: return "NGAP_UL_UE";
  }
  throw std::invalid_argument("unknown hop label");
}

inline bool hop_carries_ue_scope(HopLabel label)
{
  return label == HopLabel::namf_n1n2_transfer || label == HopLabel::namf_n2_notify ||
         label == HopLabel::ngap_dl_ue || label == HopLabel::ngap_ul_ue;
}

struct MessageEnvelope {
  std::string from;
  std::string to;
  HopLabel hop_label;
  NrppaPdu pdu;
};

struct AmfRegistry {
  std::vector<std::string> gnbs;              // delivery order of broadcasts
  std::map<std::string, std::string> serving;  // supi -> gNB entity id
};

// Relays one envelope: non-UE downlink fans out to every registered gNB,
// UE-associated downlink goes to the serving gNB only, uplinks are forwarded
// to the LMF under the matching notify label.
inline std::vector<MessageEnvelope> amf_route(const MessageEnvelope& env, const AmfRegistry& registry)
{
  if (env.to != "amf")
    throw ProtocolError("envelope is not addressed to the AMF");
  if (hop_carries_ue_scope(env.hop_label) != env.pdu.scope.ue_associated)
    throw ProtocolError("hop label does not match the PDU scope");

  std::vector<MessageEnvelope> out;
  if (env.from == "lmf") {
    if (env.pdu.scope.ue_associated) {
      if (env.hop_label != HopLabel::namf_n1n2_transfer)
        throw ProtocolError("UE-associated downlink must use Namf_N1N2_Transfer");
      const auto it = registry.serving.find(env.pdu.scope.supi);
      if (it == registry.serving.end())
        throw ProtocolError("no serving gNB registered for SUPI " + env.pdu.scope.supi);
      out.push_back({"amf", it->second, HopLabel::ngap_dl_ue, env.pdu});
    } else {
      if (env.hop_label != HopLabel::namf_non_ue_n2_transfer)
        throw ProtocolError("non-UE downlink must use Namf_NonUE_N2_Transfer");
      if (registry.gnbs.empty())
        throw ProtocolError("no gNBs registered at the AMF");
      for (const auto& gnb : registry.gnbs)
        out.push_back({"amf", gnb, HopLabel::ngap_dl_non_ue, env.pdu});
    }
    return out;
  }

  if (env.hop_label == HopLabel::ngap_ul_ue) {
    out.push_back({"amf", "lmf", HopLabel::namf_n2_notify, env.pdu});
  } else if (env.hop_label == HopLabel::ngap_ul_non_ue) {
    out.push_back({"amf", "lmf", HopLabel::namf_non_ue_n2_notify, env.pdu});
  } else {
    throw ProtocolError("uplink envelope carries a downlink hop label");
  }
  return out;
}

struct HandlerHop {
  std::string stage;
  std::string message;

  bool operator==(const HandlerHop&) const = default;
};
using HandlerChain = std::vector<HandlerHop>;

struct GnbChainRecord {
  std::string gnb;
  std::string message_type;
  HandlerChain chain;
};

struct TraceRecord {
  std::size_t seq = 0;
  HopLabel hop_label;
  std::string from;
  std::string to;
  std::string message_type;
  std::uint64_t transaction_id = 0;
};

struct ProcedureTrace {
  std::vector<TraceRecord> records;
  std::vector<GnbChainRecord> chains;
};

inline std::string format_trace(const ProcedureTrace& trace)
{
  std::ostringstream out;
  for (const auto& r : trace.records)
    out << r.seq << ", " << to_string(r.hop_label) << ", " << r.from << ", " << r.to << ", " << r.message_type
        << ", " << r.transaction_id << "\n";
  return out.str();
}

inline void write_trace(const ProcedureTrace& trace, const std::string& path)
{
  std::ofstream file(path);
  if (!file)
    throw std::runtime_error("cannot write trace file: " + path);
  file << format_trace(trace);
}

// Simulated gNB: owns its TRP list, the UL SRS configuration and the captured
// uplink grid (one receive antenna per TRP). Requests walk the internal
// NGAP -> NRPPa -> RRC -> MAC (-> PHY) stages and the walked chain is logged
// for conformance checks.
class GnbEntity {
 public:
  std::string entity_id;
  std::uint32_t gnb_id = 0;
  Plmn plmn;
  std::vector<TrpInformation> trps;  // antenna a carries trps[a]
  SrsConfigurationIe srs_ie;
  SrsSequence pilot;
  ResourceGrid rx;
  std::optional<PeakSearchWindow> window;
  int rtoa_k = 0;
  std::optional<std::string> serving_supi;
  std::uint32_t sfn = 312;
  std::uint32_t slot = 7;
  bool srs_active = false;
  double response_delay_s = 0.0;  // raising this beyond the LMF timeout mutes the gNB
  std::optional<SrsIndicationReport> last_indication;
  std::vector<GnbChainRecord> chain_log;

  std::vector<NrppaPdu> handle(const NrppaPdu& pdu)
  {
    return std::visit(
        [&](const auto& body) -> std::vector<NrppaPdu> {
          using Body = std::decay_t<decltype(body)>;
          if constexpr (std::is_same_v<Body, TrpInformationRequest>)
            return handle_trp_information(pdu);
          else if constexpr (std::is_same_v<Body, PositioningInformationRequest>)
            return handle_positioning_information(pdu);
          else if constexpr (std::is_same_v<Body, PositioningActivationRequest>)
            return handle_positioning_activation(pdu, body);
          else if constexpr (std::is_same_v<Body, MeasurementRequest>)
            return handle_measurement(pdu, body);
          else
            throw ProtocolError("gNB received a non-request PDU");
        },
        pdu.body);
  }

 private:
  void require_scope(const NrppaPdu& pdu, bool ue_associated) const
  {
    if (pdu.scope.ue_associated != ue_associated)
      throw ProtocolError(std::string(message_type_name(pdu)) + " arrived with the wrong association scope");
    if (ue_associated && serving_supi && pdu.scope.supi != *serving_supi)
      throw ProtocolError("gNB " + entity_id + " does not serve SUPI " + pdu.scope.supi);
  }

  void log_chain(const NrppaPdu& pdu, HandlerChain chain)
  {
    chain_log.push_back({entity_id, message_type_name(pdu), std::move(chain)});
  }

  static HandlerChain request_chain(const std::string& name, bool ue_associated, bool reaches_phy)
  {
    const std::string assoc = ue_associated ? "UE Associated" : "Non-UE Associated";
    HandlerChain chain;
    chain.push_back({"gNB-NGAP", "Downlink " + assoc + " NRPPa Transport"});
    chain.push_back({"gNB-NRPPa", "F1AP: " + name + " Request"});
    chain.push_back({"gNB-RRC", "F1AP: " + name + " Request"});
    if (reaches_phy) {
      chain.push_back({"gNB-MAC", "FAPI: " + name + " Request"});
      chain.push_back({"gNB-PHY", "FAPI: " + name + " Response"});
    }
    chain.push_back({"gNB-MAC", "F1AP: " + name + " Response"});
    chain.push_back({"gNB-RRC", "F1AP: " + name + " Response"});
    chain.push_back({"gNB-NRPPa", "Uplink " + assoc + " NRPPa Transport"});
    chain.push_back({"gNB-NGAP", "Uplink " + assoc + " NRPPa Transport"});
    return chain;
  }

  std::vector<NrppaPdu> handle_trp_information(const NrppaPdu& pdu)
  {
    require_scope(pdu, false);
    log_chain(pdu, request_chain("TRP Information", false, false));
    return {NrppaPdu{pdu.transaction_id, pdu.scope, TrpInformationResponse{trps}}};
  }

  std::vector<NrppaPdu> handle_positioning_information(const NrppaPdu& pdu)
  {
    require_scope(pdu, true);
    log_chain(pdu, request_chain("Positioning Information", true, false));
    // The UE sounds periodically already; the existing configuration is
    // returned regardless of the requested characteristics.
    return {NrppaPdu{pdu.transaction_id, pdu.scope, PositioningInformationResponse{srs_ie}}};
  }

  std::vector<NrppaPdu> handle_positioning_activation(const NrppaPdu& pdu, const PositioningActivationRequest& req)
  {
    require_scope(pdu, true);
    if (req.srs_resource_set_id != srs_ie.srs_resource_set_id)
      throw ProtocolError("activation names an unknown SRS resource set");
    log_chain(pdu, request_chain("Positioning Activation", true, false));
    srs_active = true;
    return {NrppaPdu{pdu.transaction_id, pdu.scope, PositioningActivationResponse{std::nullopt, sfn, slot}}};
  }

  std::vector<NrppaPdu> handle_measurement(const NrppaPdu& pdu, const MeasurementRequest& req)
  {
    require_scope(pdu, false);
    log_chain(pdu, request_chain("Measurement", false, true));
    if (rx.n_ant != trps.size())
      throw ProtocolError("gNB capture does not cover its TRP list");

    const SrsConfig& cfg = srs_ie.srs;
    std::vector<ToaMeasurement> measured;
    for (std::size_t a = 0; a < rx.n_ant; ++a) {
      if (req.trp_id != 0 && req.trp_id != trps[a].trp_id)
        continue;
      SrsConfig single = cfg;
      single.n_rx = 1;
      ResourceGrid plane(1, rx.n_port, rx.n_symb, rx.n_bins);
      for (std::size_t p = 0; p < rx.n_port; ++p)
        for (std::size_t l = 0; l < rx.n_symb; ++l)
          for (std::size_t k = 0; k < rx.n_bins; ++k)
            plane.at(0, p, l, k) = rx.at(a, p, l, k);
      try {
        auto m = estimate_toa(plane, pilot, single, window, rtoa_k);
        m.front().trp_id = trps[a].trp_id;
        measured.push_back(m.front());
      } catch (const PeakDetectionError&) {
        // a TRP without a usable peak contributes no response
      }
    }

    last_indication = encode_srs_indication(measured);
    std::vector<NrppaPdu> out;
    out.reserve(measured.size());
    for (const auto& m : measured)
      out.push_back(NrppaPdu{pdu.transaction_id, pdu.scope,
                             MeasurementResponse{m.trp_id, m.ul_rtoa_index, rtoa_k, m.rx_tx_diff_s, m.rsrp_dbfs}});
    return out;
  }
};

struct PeriodicEventInfo {
  int amount = 1;
  double interval_s = 1.0;
};

struct InputData {
  std::string supi;
  Ncgi ncgi;
  std::optional<PeriodicEventInfo> periodic_event_info;
};

struct GeographicCoordinates {
  double latitude_deg = 0.0;
  double longitude_deg = 0.0;
  double altitude_m = 0.0;
};

struct LocationData {
  std::optional<GeographicCoordinates> geographic;
  Position3D cartesian;
};

struct LmfConfig {
  double fixed_z = 1.3;
  double nlls_tol_m = 1e-9;
  int nlls_max_iter = 100;
  double timeout_s = 2.0;
};

struct PositioningWorld {
  AmfRegistry registry;
  std::vector<GnbEntity> gnbs;
  LmfConfig lmf;

  GnbEntity& gnb(const std::string& entity_id)
  {
    for (auto& g : gnbs)
      if (g.entity_id == entity_id)
        return g;
    throw std::invalid_argument("unknown gNB entity: " + entity_id);
  }
};

struct ProcedureResult {
  LocationData location;
  PositionEstimate estimate;
  std::vector<ToaMeasurement> measurements;
  TdoaSet tdoas;
  ProcedureTrace trace;
};

inline constexpr std::uint32_t kMeasurementRnti = 0xFFF4;  // reserved for positioning captures

// Runs the full location procedure: TRP inventory (broadcast), SRS
// configuration lookup and activation (serving gNB), measurement collection
// (broadcast), then TDoA multilateration on the dequantized arrival times.
inline ProcedureResult lmf_run_procedure(const InputData& input, PositioningWorld& world)
{
  if (!all_digits(input.supi))
    throw std::invalid_argument("SUPI must be a nonempty digit string");
  if (world.registry.serving.find(input.supi) == world.registry.serving.end())
    throw ProtocolError("UE " + input.supi + " has no serving gNB registered");

  ProcedureResult result;
  std::size_t seq = 0;
  const auto record = [&](const MessageEnvelope& env) {
    result.trace.records.push_back(
        {++seq, env.hop_label, env.from, env.to, message_type_name(env.pdu), env.pdu.transaction_id});
  };

  std::uint64_t next_transaction = 0;
  const auto exchange = [&](NrppaBody body, const RoutingScope& scope) {
    const NrppaPdu request{++next_transaction, scope, std::move(body)};
    const HopLabel down =
        scope.ue_associated ? HopLabel::namf_n1n2_transfer : HopLabel::namf_non_ue_n2_transfer;
    const MessageEnvelope to_amf{"lmf", "amf", down, request};
    record(to_amf);
    const auto deliveries = amf_route(to_amf, world.registry);
    for (const auto& d : deliveries)
      record(d);

    std::vector<NrppaPdu> responses;
    std::vector<std::string> silent;
    for (const auto& d : deliveries) {
      GnbEntity& gnb = world.gnb(d.to);
      if (gnb.response_delay_s > world.lmf.timeout_s) {
        silent.push_back(gnb.entity_id);
        continue;
      }
      const auto replies = gnb.handle(d.pdu);
      for (auto& rec : gnb.chain_log)
        result.trace.chains.push_back(std::move(rec));
      gnb.chain_log.clear();

      const HopLabel up = scope.ue_associated ? HopLabel::ngap_ul_ue : HopLabel::ngap_ul_non_ue;
      for (const auto& reply : replies) {
        if (reply.transaction_id != request.transaction_id)
          throw ProtocolError("response transaction id does not match the request");
        if (reply.scope.ue_associated != scope.ue_associated || reply.scope.supi != scope.supi)
          throw ProtocolError("response scope does not match the request");
        if (reply.body.index() != request.body.index() + 1)
          throw ProtocolError("response variant does not pair with the request");
        const MessageEnvelope uplink{gnb.entity_id, "amf", up, reply};
        record(uplink);
        for (const auto& notify : amf_route(uplink, world.registry)) {
          record(notify);
          responses.push_back(notify.pdu);
        }
      }
    }
    if (!silent.empty())
      throw TimeoutError("timeout waiting for " + std::string(message_type_name(request)) +
                         " handling at " + silent.front());
    return responses;
  };

  std::map<std::uint32_t, Position3D> trp_positions;
  for (const auto& pdu : exchange(TrpInformationRequest{}, RoutingScope::non_ue())) {
    for (const auto& trp : std::get<TrpInformationResponse>(pdu.body).trps)
      if (!trp_positions.emplace(trp.trp_id, trp.location).second)
        throw ProtocolError("duplicate trp_id " + std::to_string(trp.trp_id) + " across gNBs");
  }

  const auto scope_ue = RoutingScope::ue(input.supi);
  const auto info_responses =
      exchange(PositioningInformationRequest{"periodic positioning SRS"}, scope_ue);
  if (info_responses.size() != 1)
    throw ProtocolError("expected exactly one PositioningInformationResponse");
  const SrsConfigurationIe srs_ie = std::get<PositioningInformationResponse>(info_responses.front().body).srs;

  const auto activation_responses =
      exchange(PositioningActivationRequest{srs_ie.srs_resource_set_id, 1}, scope_ue);
  if (activation_responses.size() != 1)
    throw ProtocolError("expected exactly one PositioningActivationResponse");
  if (std::get<PositioningActivationResponse>(activation_responses.front().body).sfn > 1023)
    throw ProtocolError("activation sfn out of range");

  for (const auto& pdu : exchange(MeasurementRequest{0, srs_ie, kMeasurementRnti}, RoutingScope::non_ue())) {
    const auto& m = std::get<MeasurementResponse>(pdu.body);
    ToaMeasurement meas;
    meas.trp_id = m.trp_id;
    meas.toa_s = dequantize_ul_rtoa(m.ul_rtoa_index, m.k);
    meas.ul_rtoa_index = m.ul_rtoa_index;
    meas.rsrp_dbfs = m.rsrp_dbfs;
    meas.rx_tx_diff_s = m.rx_tx_diff_s;
    result.measurements.push_back(meas);
  }

  if (result.measurements.size() < 3)
    throw InsufficientMeasurementsError("insufficient measurements: " +
                                        std::to_string(result.measurements.size()) +
                                        " TRPs responded, at least 3 needed");
  for (const auto& m : result.measurements)
    if (trp_positions.find(m.trp_id) == trp_positions.end())
      throw ProtocolError("measurement from TRP " + std::to_string(m.trp_id) + " without known position");

  const std::uint32_t reference = select_reference(result.measurements);
  result.tdoas = toa_to_tdoa(result.measurements, reference, trp_positions);

  const double z = world.lmf.fixed_z;
  Position3D init{0.0, 0.0, z};
  bool init_ambiguous = false;
  if (result.measurements.size() >= 4) {
    const auto linear = ls_position(result.tdoas, z);
    init = linear.position;
    init_ambiguous = linear.ambiguity_flag;
  } else {
    for (const auto& e : result.tdoas.entries) {
      const auto& p = result.tdoas.trp_positions.at(e.trp_id);
      init.x += p.x / static_cast<double>(result.tdoas.entries.size());
      init.y += p.y / static_cast<double>(result.tdoas.entries.size());
    }
  }

  result.estimate = nlls_refine(result.tdoas, init, z, world.lmf.nlls_tol_m, world.lmf.nlls_max_iter);
  result.estimate.ambiguity_flag = result.estimate.ambiguity_flag || init_ambiguous;
  result.location.cartesian = result.estimate.position;
  return result;
}

}  // namespace ultdoa
