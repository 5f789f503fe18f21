#pragma once

#include "ultdoa/channel.hpp"
#include "ultdoa/estimator.hpp"
#include "ultdoa/fft.hpp"
#include "ultdoa/harness.hpp"
#include "ultdoa/locator.hpp"
#include "ultdoa/protocol.hpp"
#include "ultdoa/serialization.hpp"
#include "ultdoa/service.hpp"
#include "ultdoa/signal.hpp"
