#pragma once

// Umbrella header: round-trip-correctness evaluation for LLM responses.

#include "rtc/client.hpp"
#include "rtc/config.hpp"
#include "rtc/core.hpp"
#include "rtc/errors.hpp"
#include "rtc/gateway.hpp"
#include "rtc/harness.hpp"
#include "rtc/mock.hpp"
#include "rtc/oracle.hpp"
#include "rtc/patch.hpp"
#include "rtc/prompts.hpp"
#include "rtc/similarity.hpp"
#include "rtc/stats.hpp"
#include "rtc/wire.hpp"
