#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ultdoa/channel.hpp"
#include "ultdoa/protocol.hpp"
#include "ultdoa/signal.hpp"

using namespace ultdoa;

namespace {

constexpr const char* kSupi = "001010000000001";

GnbEntity make_gnb(const std::string& entity_id, std::uint32_t gnb_id,
                   const std::vector<TrpInformation>& trps,
                   const Position3D& ue,
                   std::optional<std::string> serving = std::nullopt)
{
  GnbEntity gnb;
  gnb.entity_id = entity_id;
  gnb.gnb_id = gnb_id;
  gnb.trps = trps;
  gnb.serving_supi = std::move(serving);

  SrsConfig cfg;
  cfg.n_rx = trps.size();
  gnb.srs_ie.srs = cfg;
  gnb.pilot = generate_srs_sequence(cfg, 1);

  std::vector<ChannelModel> models(trps.size());
  for (std::size_t a = 0; a < trps.size(); ++a)
    models[a].paths = {{geometric_delay(ue, trps[a].location), {1.0, 0.0}}};
  gnb.rx = apply_channels(map_to_grid(cfg, gnb.pilot), cfg, models);
  return gnb;
}

PositioningWorld make_world(const Position3D& ue)
{
  const std::vector<TrpInformation> trps = {{1, {}, {0.0, 0.0, 2.0}, 0.0},
                                            {2, {}, {20.0, 0.0, 2.0}, 0.0},
                                            {3, {}, {0.0, 20.0, 2.0}, 0.0},
                                            {4, {}, {20.0, 20.0, 2.0}, 0.0}};
  PositioningWorld world;
  world.gnbs.push_back(make_gnb("gnb-1", 1, trps, ue, kSupi));
  world.registry.gnbs = {"gnb-1"};
  world.registry.serving[kSupi] = "gnb-1";
  return world;
}

NrppaPdu trp_request(std::uint64_t txn = 1)
{
  return {txn, RoutingScope::non_ue(), TrpInformationRequest{}};
}

}  // namespace

TEST(MessageTypes, NamesFollowTheVariantOrder)
{
  EXPECT_STREQ(message_type_name(trp_request()), "TrpInformationRequest");
  NrppaPdu pdu{1, RoutingScope::non_ue(), TrpInformationResponse{}};
  EXPECT_STREQ(message_type_name(pdu), "TrpInformationResponse");
  pdu.body = MeasurementRequest{};
  EXPECT_STREQ(message_type_name(pdu), "MeasurementRequest");
  pdu.body = MeasurementResponse{};
  EXPECT_STREQ(message_type_name(pdu), "MeasurementResponse");

  EXPECT_TRUE(is_request(trp_request()));
  EXPECT_FALSE(is_request(pdu));
}

TEST(HopLabels, RenderTheirWireNames)
{
  EXPECT_STREQ(to_string(HopLabel::namf_non_ue_n2_transfer),
               "Namf_NonUE_N2_Transfer");
  EXPECT_STREQ(to_string(HopLabel::namf_n1n2_transfer), "Namf_N1N2_Transfer");
  EXPECT_STREQ(to_string(HopLabel::namf_non_ue_n2_notify),
               "Namf_NonUE_N2_Notify");
  EXPECT_STREQ(to_string(HopLabel::namf_n2_notify), "Namf_N2_Notify");
  EXPECT_STREQ(to_string(HopLabel::ngap_dl_non_ue), "NGAP_DL_NonUE");
  EXPECT_STREQ(to_string(HopLabel::ngap_ul_non_ue), "NGAP_UL_NonUE");
  EXPECT_STREQ(to_string(HopLabel::ngap_dl_ue), "NGAP_DL_UE");
  EXPECT_STREQ(to_string(HopLabel::ngap_ul_ue), "NGAP_UL_UE");

  EXPECT_FALSE(hop_carries_ue_scope(HopLabel::namf_non_ue_n2_transfer));
  EXPECT_TRUE(hop_carries_ue_scope(HopLabel::namf_n1n2_transfer));
  EXPECT_TRUE(hop_carries_ue_scope(HopLabel::ngap_ul_ue));
  EXPECT_FALSE(hop_carries_ue_scope(HopLabel::ngap_ul_non_ue));
}

TEST(AmfRouting, BroadcastsNonUeRequestsToEveryGnb)
{
  AmfRegistry registry;
  registry.gnbs = {"gnb-1", "gnb-2", "gnb-3"};

  const MessageEnvelope env{"lmf", "amf", HopLabel::namf_non_ue_n2_transfer,
                            trp_request(7)};
  const auto out = amf_route(env, registry);
  ASSERT_EQ(out.size(), 3u);
  for (std::size_t i = 0; i < out.size(); ++i) {
    EXPECT_EQ(out[i].from, "amf");
    EXPECT_EQ(out[i].to, registry.gnbs[i]);
    EXPECT_EQ(out[i].hop_label, HopLabel::ngap_dl_non_ue);
    EXPECT_EQ(out[i].pdu.transaction_id, 7u);
  }
}

TEST(AmfRouting, DeliversUeRequestsOnlyToTheServingGnb)
{
  AmfRegistry registry;
  registry.gnbs = {"gnb-1", "gnb-2"};
  registry.serving[kSupi] = "gnb-2";

  const NrppaPdu pdu{3, RoutingScope::ue(kSupi),
                     PositioningInformationRequest{"periodic positioning SRS"}};
  const MessageEnvelope env{"lmf", "amf", HopLabel::namf_n1n2_transfer, pdu};
  const auto out = amf_route(env, registry);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].to, "gnb-2");
  EXPECT_EQ(out[0].hop_label, HopLabel::ngap_dl_ue);
}

TEST(AmfRouting, TurnsUplinkTransportIntoNotifications)
{
  AmfRegistry registry;
  registry.gnbs = {"gnb-1"};

  NrppaPdu pdu{4, RoutingScope::non_ue(), TrpInformationResponse{}};
  const auto non_ue =
      amf_route({"gnb-1", "amf", HopLabel::ngap_ul_non_ue, pdu}, registry);
  ASSERT_EQ(non_ue.size(), 1u);
  EXPECT_EQ(non_ue[0].to, "lmf");
  EXPECT_EQ(non_ue[0].hop_label, HopLabel::namf_non_ue_n2_notify);

  pdu.scope = RoutingScope::ue(kSupi);
  pdu.body = PositioningInformationResponse{};
  const auto ue = amf_route({"gnb-1", "amf", HopLabel::ngap_ul_ue, pdu},
                            registry);
  ASSERT_EQ(ue.size(), 1u);
  EXPECT_EQ(ue[0].to, "lmf");
  EXPECT_EQ(ue[0].hop_label, HopLabel::namf_n2_notify);
}

TEST(AmfRouting, RejectsIllFormedEnvelopes)
{
  AmfRegistry registry;
  registry.gnbs = {"gnb-1"};
  registry.serving[kSupi] = "gnb-1";

  EXPECT_THROW(
      amf_route({"lmf", "gnb-1", HopLabel::namf_non_ue_n2_transfer,
                 trp_request()},
                registry),
      ProtocolError);

  // hop label promises a UE association the PDU does not carry
  EXPECT_THROW(
      amf_route({"lmf", "amf", HopLabel::namf_n1n2_transfer, trp_request()},
                registry),
      ProtocolError);

  const NrppaPdu ue_pdu{1, RoutingScope::ue("999990000000099"),
                        PositioningInformationRequest{}};
  EXPECT_THROW(
      amf_route({"lmf", "amf", HopLabel::namf_n1n2_transfer, ue_pdu},
                registry),
      ProtocolError);

  AmfRegistry empty;
  EXPECT_THROW(
      amf_route({"lmf", "amf", HopLabel::namf_non_ue_n2_transfer,
                 trp_request()},
                empty),
      ProtocolError);

  EXPECT_THROW(
      amf_route({"gnb-1", "amf", HopLabel::ngap_dl_non_ue, trp_request()},
                registry),
      ProtocolError);
}

TEST(GnbHandling, TrpInformationListsTheConfiguredTrps)
{
  const std::vector<TrpInformation> trps = {{11, {}, {0.0, 0.0, 2.0}, 0.0},
                                            {12, {}, {-9.0, 0.0, 2.0}, 0.0},
                                            {13, {}, {-27.0, 0.0, 2.0}, 0.0},
                                            {14, {}, {-36.0, 0.0, 2.0}, 0.0}};
  auto gnb = make_gnb("gnb-1", 1, trps, {-18.0, 10.0, 1.3});

  const auto replies = gnb.handle(trp_request(9));
  ASSERT_EQ(replies.size(), 1u);
  EXPECT_EQ(replies[0].transaction_id, 9u);
  EXPECT_FALSE(replies[0].scope.ue_associated);

  const auto& response = std::get<TrpInformationResponse>(replies[0].body);
  ASSERT_EQ(response.trps.size(), 4u);
  EXPECT_EQ(response.trps[1].trp_id, 12u);
  EXPECT_DOUBLE_EQ(response.trps[2].location.x, -27.0);

  ASSERT_EQ(gnb.chain_log.size(), 1u);
  const HandlerChain expected = {
      {"gNB-NGAP", "Downlink Non-UE Associated NRPPa Transport"},
      {"gNB-NRPPa", "F1AP: TRP Information Request"},
      {"gNB-RRC", "F1AP: TRP Information Request"},
      {"gNB-MAC", "F1AP: TRP Information Response"},
      {"gNB-RRC", "F1AP: TRP Information Response"},
      {"gNB-NRPPa", "Uplink Non-UE Associated NRPPa Transport"},
      {"gNB-NGAP", "Uplink Non-UE Associated NRPPa Transport"},
  };
  EXPECT_EQ(gnb.chain_log[0].chain, expected);
  EXPECT_EQ(gnb.chain_log[0].message_type, "TrpInformationRequest");

  NrppaPdu ue_scoped = trp_request(10);
  ue_scoped.scope = RoutingScope::ue(kSupi);
  EXPECT_THROW(gnb.handle(ue_scoped), ProtocolError);
}

TEST(GnbHandling, PositioningInformationReturnsTheLiveSrsConfiguration)
{
  auto gnb = make_gnb("gnb-1", 1, {{1, {}, {0.0, 0.0, 2.0}, 0.0}},
                      {5.0, 5.0, 1.3}, kSupi);

  NrppaPdu request{2, RoutingScope::ue(kSupi),
                   PositioningInformationRequest{"aperiodic wideband SRS"}};
  const auto replies = gnb.handle(request);
  ASSERT_EQ(replies.size(), 1u);
  const auto& response =
      std::get<PositioningInformationResponse>(replies[0].body);
  EXPECT_EQ(response.srs.srs_resource_set_id, 1u);
  EXPECT_EQ(response.srs.srs.n_fft, gnb.srs_ie.srs.n_fft);

  // the request's desired characteristics do not change the answer
  request.body = PositioningInformationRequest{"something else entirely"};
  const auto again = gnb.handle(request);
  EXPECT_EQ(std::get<PositioningInformationResponse>(again[0].body)
                .srs.srs_resource_set_id,
            response.srs.srs_resource_set_id);

  NrppaPdu wrong_ue = request;
  wrong_ue.scope = RoutingScope::ue("001019999999999");
  EXPECT_THROW(gnb.handle(wrong_ue), ProtocolError);

  NrppaPdu non_ue = request;
  non_ue.scope = RoutingScope::non_ue();
  EXPECT_THROW(gnb.handle(non_ue), ProtocolError);
}

TEST(GnbHandling, ActivationFlagsTheResourceSetActive)
{
  auto gnb = make_gnb("gnb-1", 1, {{1, {}, {0.0, 0.0, 2.0}, 0.0}},
                      {5.0, 5.0, 1.3}, kSupi);
  EXPECT_FALSE(gnb.srs_active);

  NrppaPdu request{3, RoutingScope::ue(kSupi),
                   PositioningActivationRequest{1, 1}};
  const auto replies = gnb.handle(request);
  EXPECT_TRUE(gnb.srs_active);
  const auto& response =
      std::get<PositioningActivationResponse>(replies[0].body);
  EXPECT_FALSE(response.criticality_diagnostics.has_value());
  EXPECT_LE(response.sfn, 1023u);
  EXPECT_EQ(response.sfn, 312u);
  EXPECT_EQ(response.slot, 7u);

  NrppaPdu unknown_set = request;
  unknown_set.body = PositioningActivationRequest{9, 1};
  EXPECT_THROW(gnb.handle(unknown_set), ProtocolError);
}

TEST(GnbHandling, MeasurementReportsQuantizedArrivals)
{
  SrsConfig probe;  // only for the sample period below
  const double sample_m = probe.sample_period_s * kSpeedOfLightMps;
  const Position3D ue{0.0, 0.0, 2.0};
  const std::vector<TrpInformation> trps = {
      {21, {}, {4.0 * sample_m, 0.0, 2.0}, 0.0},
      {22, {}, {9.0 * sample_m, 0.0, 2.0}, 0.0}};
  auto gnb = make_gnb("gnb-1", 1, trps, ue);

  NrppaPdu request{5, RoutingScope::non_ue(),
                   MeasurementRequest{0, gnb.srs_ie, kMeasurementRnti}};
  const auto replies = gnb.handle(request);
  ASSERT_EQ(replies.size(), 2u);

  const auto& first = std::get<MeasurementResponse>(replies[0].body);
  const auto& second = std::get<MeasurementResponse>(replies[1].body);
  EXPECT_EQ(first.trp_id, 21u);
  EXPECT_EQ(first.ul_rtoa_index, 4u * 32u);  // T_s spans 32 ticks of T_c
  EXPECT_EQ(first.k, 0);
  EXPECT_DOUBLE_EQ(first.rx_tx_diff_s, 0.0);
  EXPECT_NEAR(first.rsrp_dbfs, 0.0, 1e-9);
  EXPECT_EQ(second.trp_id, 22u);
  EXPECT_EQ(second.ul_rtoa_index, 9u * 32u);

  ASSERT_TRUE(gnb.last_indication.has_value());
  EXPECT_EQ(gnb.last_indication->srs_usage_type, 5);
  EXPECT_EQ(gnb.last_indication->report_type, "Localization");
  ASSERT_EQ(gnb.last_indication->offsets_ns.size(), 2u);
  EXPECT_EQ(gnb.last_indication->offsets_ns[0], 65u);  // round(4 / 61.44e6 * 1e9)

  const HandlerChain expected = {
      {"gNB-NGAP", "Downlink Non-UE Associated NRPPa Transport"},
      {"gNB-NRPPa", "F1AP: Measurement Request"},
      {"gNB-RRC", "F1AP: Measurement Request"},
      {"gNB-MAC", "FAPI: Measurement Request"},
      {"gNB-PHY", "FAPI: Measurement Response"},
      {"gNB-MAC", "F1AP: Measurement Response"},
      {"gNB-RRC", "F1AP: Measurement Response"},
      {"gNB-NRPPa", "Uplink Non-UE Associated NRPPa Transport"},
      {"gNB-NGAP", "Uplink Non-UE Associated NRPPa Transport"},
  };
  EXPECT_EQ(gnb.chain_log.back().chain, expected);
}

TEST(GnbHandling, MeasurementCanTargetASingleTrp)
{
  SrsConfig probe;
  const double sample_m = probe.sample_period_s * kSpeedOfLightMps;
  const std::vector<TrpInformation> trps = {
      {21, {}, {4.0 * sample_m, 0.0, 2.0}, 0.0},
      {22, {}, {9.0 * sample_m, 0.0, 2.0}, 0.0}};
  auto gnb = make_gnb("gnb-1", 1, trps, {0.0, 0.0, 2.0});

  NrppaPdu request{6, RoutingScope::non_ue(),
                   MeasurementRequest{22, gnb.srs_ie, kMeasurementRnti}};
  const auto replies = gnb.handle(request);
  ASSERT_EQ(replies.size(), 1u);
  EXPECT_EQ(std::get<MeasurementResponse>(replies[0].body).trp_id, 22u);
}

TEST(GnbHandling, SilentTrpContributesNoResponse)
{
  SrsConfig cfg;
  cfg.n_rx = 2;
  const std::vector<TrpInformation> trps = {{31, {}, {10.0, 0.0, 2.0}, 0.0},
                                            {32, {}, {0.0, 10.0, 2.0}, 0.0}};

  GnbEntity gnb;
  gnb.entity_id = "gnb-1";
  gnb.gnb_id = 1;
  gnb.trps = trps;
  gnb.srs_ie.srs = cfg;
  gnb.pilot = generate_srs_sequence(cfg, 1);

  std::vector<ChannelModel> models(2);
  models[0].paths = {{geometric_delay({0, 0, 1.3}, trps[0].location), {1.0, 0.0}}};
  models[1].paths = {{0.0, {0.0, 0.0}}};  // dead antenna
  gnb.rx = apply_channels(map_to_grid(cfg, gnb.pilot), cfg, models);

  NrppaPdu request{8, RoutingScope::non_ue(),
                   MeasurementRequest{0, gnb.srs_ie, kMeasurementRnti}};
  const auto replies = gnb.handle(request);
  ASSERT_EQ(replies.size(), 1u);
  EXPECT_EQ(std::get<MeasurementResponse>(replies[0].body).trp_id, 31u);
}

TEST(GnbHandling, ResponsesAreNotHandled)
{
  auto gnb = make_gnb("gnb-1", 1, {{1, {}, {0.0, 0.0, 2.0}, 0.0}},
                      {5.0, 5.0, 1.3});
  const NrppaPdu response{1, RoutingScope::non_ue(), TrpInformationResponse{}};
  EXPECT_THROW(gnb.handle(response), ProtocolError);
}

TEST(LocationProcedure, RunsAllPhasesAndLocatesTheUe)
{
  const Position3D truth{5.0, 5.0, 1.3};
  auto world = make_world(truth);

  InputData input;
  input.supi = kSupi;
  const auto result = lmf_run_procedure(input, world);

  ASSERT_EQ(result.measurements.size(), 4u);
  EXPECT_EQ(result.tdoas.entries.size(), 4u);
  EXPECT_TRUE(result.estimate.converged);
  EXPECT_FALSE(result.estimate.ambiguity_flag);
  EXPECT_NEAR(result.location.cartesian.x, truth.x, 0.5);
  EXPECT_NEAR(result.location.cartesian.y, truth.y, 0.5);
  EXPECT_DOUBLE_EQ(result.location.cartesian.z, 1.3);

  // single gNB: each phase is transfer, downlink, uplink(s), notify(s)
  ASSERT_EQ(result.trace.records.size(), 22u);
  const std::vector<std::string> expected_types = {
      "TrpInformationRequest",          "TrpInformationRequest",
      "TrpInformationResponse",         "TrpInformationResponse",
      "PositioningInformationRequest",  "PositioningInformationRequest",
      "PositioningInformationResponse", "PositioningInformationResponse",
      "PositioningActivationRequest",   "PositioningActivationRequest",
      "PositioningActivationResponse",  "PositioningActivationResponse",
      "MeasurementRequest",             "MeasurementRequest",
      "MeasurementResponse",            "MeasurementResponse",
      "MeasurementResponse",            "MeasurementResponse",
      "MeasurementResponse",            "MeasurementResponse",
      "MeasurementResponse",            "MeasurementResponse",
  };
  for (std::size_t i = 0; i < expected_types.size(); ++i) {
    EXPECT_EQ(result.trace.records[i].seq, i + 1);
    EXPECT_EQ(result.trace.records[i].message_type, expected_types[i]);
  }

  EXPECT_EQ(result.trace.records[0].hop_label,
            HopLabel::namf_non_ue_n2_transfer);
  EXPECT_EQ(result.trace.records[4].hop_label, HopLabel::namf_n1n2_transfer);
  EXPECT_EQ(result.trace.records[5].hop_label, HopLabel::ngap_dl_ue);
  EXPECT_EQ(result.trace.records[6].hop_label, HopLabel::ngap_ul_ue);
  EXPECT_EQ(result.trace.records[7].hop_label, HopLabel::namf_n2_notify);

  // transactions pair up and stay phase-local
  for (const auto& r : result.trace.records) {
    const std::size_t i = r.seq - 1;
    const std::uint64_t phase = i < 4 ? 1 : i < 8 ? 2 : i < 12 ? 3 : 4;
    EXPECT_EQ(r.transaction_id, phase);
  }

  // one handler chain per request, measurement walks down to the PHY
  ASSERT_EQ(result.trace.chains.size(), 4u);
  EXPECT_EQ(result.trace.chains[0].chain.size(), 7u);
  EXPECT_EQ(result.trace.chains[3].chain.size(), 9u);
  EXPECT_EQ(result.trace.chains[3].message_type, "MeasurementRequest");
}

TEST(LocationProcedure, RepeatedRunsAreIdentical)
{
  auto world = make_world({12.0, 7.0, 1.3});
  InputData input;
  input.supi = kSupi;

  const auto first = lmf_run_procedure(input, world);
  const auto second = lmf_run_procedure(input, world);
  EXPECT_EQ(first.location.cartesian.x, second.location.cartesian.x);
  EXPECT_EQ(first.location.cartesian.y, second.location.cartesian.y);
  EXPECT_EQ(format_trace(first.trace), format_trace(second.trace));
}

TEST(LocationProcedure, RejectsUnservedOrMalformedSupi)
{
  auto world = make_world({5.0, 5.0, 1.3});
  InputData input;
  input.supi = "999990000000001";
  EXPECT_THROW(lmf_run_procedure(input, world), ProtocolError);

  input.supi = "not-a-supi";
  EXPECT_THROW(lmf_run_procedure(input, world), std::invalid_argument);
}

TEST(LocationProcedure, TooFewAudibleTrpsIsAnError)
{
  const Position3D truth{5.0, 5.0, 1.3};
  auto world = make_world(truth);
  auto& gnb = world.gnb("gnb-1");

  // silence two of the four antennas
  SrsConfig cfg = gnb.srs_ie.srs;
  std::vector<ChannelModel> models(4);
  for (std::size_t a = 0; a < 4; ++a) {
    const double amp = a < 2 ? 1.0 : 0.0;
    models[a].paths = {
        {geometric_delay(truth, gnb.trps[a].location), {amp, 0.0}}};
  }
  gnb.rx = apply_channels(map_to_grid(cfg, gnb.pilot), cfg, models);

  InputData input;
  input.supi = kSupi;
  EXPECT_THROW(lmf_run_procedure(input, world),
               InsufficientMeasurementsError);
}

TEST(LocationProcedure, UnresponsiveGnbTimesOut)
{
  auto world = make_world({5.0, 5.0, 1.3});
  world.gnb("gnb-1").response_delay_s = 5.0;  // beyond the default 2 s

  InputData input;
  input.supi = kSupi;
  EXPECT_THROW(lmf_run_procedure(input, world), TimeoutError);

  world.gnb("gnb-1").response_delay_s = 0.5;
  EXPECT_NO_THROW(lmf_run_procedure(input, world));
}

TEST(TraceFormatting, OneLinePerRecord)
{
  ProcedureTrace trace;
  trace.records.push_back({1, HopLabel::namf_non_ue_n2_transfer, "lmf", "amf",
                           "TrpInformationRequest", 1});
  trace.records.push_back({2, HopLabel::ngap_dl_non_ue, "amf", "gnb-1",
                           "TrpInformationRequest", 1});

  EXPECT_EQ(format_trace(trace),
            "1, Namf_NonUE_N2_Transfer, lmf, amf, TrpInformationRequest, 1\n"
            "2, NGAP_DL_NonUE, amf, gnb-1, TrpInformationRequest, 1\n");

  const std::string path = ::testing::TempDir() + "trace_out.txt";
  write_trace(trace, path);
  std::ifstream in(path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  EXPECT_EQ(buffer.str(), format_trace(trace));
  std::remove(path.c_str());

  EXPECT_THROW(write_trace(trace, "/nonexistent-dir/trace.txt"),
               std::runtime_error);
}
