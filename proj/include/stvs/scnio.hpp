#pragma once

#include <iosfwd>
#include <string>

#include "stvs/scenario.hpp"

namespace stvs::io {

// Scenario files (.scn) are a line-oriented structured-text format:
//
//   stvs-scenario 1          <- magic + schema version, first line
//   name = two_device        <- top-level keys
//   [bus]                    <- repeated record sections
//   id = 1
//   base_kv = 230
//   monitored = true
//   [limits]                 <- singleton sections
//   v_lvrt = 0.2
//   ...
//
// '#' starts a comment; blank lines are ignored. Tunings files share the
// grammar under the magic "stvs-tunings 1".

/// Parse and fully validate a scenario; throws ValidationError carrying
/// every problem found (with the offending file location or field path).
GridScenario load_scenario(const std::string& path);
GridScenario parse_scenario(std::istream& in, const std::string& origin);

std::string format_scenario(const GridScenario& scenario);
void write_scenario(const GridScenario& scenario, const std::string& path);

DeviceTuning load_tunings(const std::string& path);
DeviceTuning parse_tunings(std::istream& in, const std::string& origin);

std::string format_tunings(const DeviceTuning& tuning);
void write_tunings(const DeviceTuning& tuning, const std::string& path);

/// Tunings are rejected unless every tuned value honors the scenario's
/// optimizer bounds and every referenced bus/fault exists.
void check_tunings_against(const DeviceTuning& tuning, const GridScenario& scenario);

}  // namespace stvs::io
