#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <vector>

#include "cpf/sim.hpp"

namespace cpf::metrics {

// Versioned first-line markers for the CSV outputs, so downstream consumers
// can detect schema drift.
inline constexpr const char* kTicksCsvSchema = "# cpfusion-ticks v1";
inline constexpr const char* kSummaryCsvSchema = "# cpfusion-summary v1";
inline constexpr const char* kNeesCsvSchema = "# cpfusion-nees v1";
inline constexpr const char* kTraceCsvSchema = "# cpfusion-trace v1";

// Steady-state statistics for one pedestrian, computed at the evaluation
// station over the tail window of the run.
struct PedestrianStat {
  std::size_t pedestrian = 0;
  // RMS of the reported marginal stds along each axis (sqrt of mean variance).
  double std_x = 0.0;
  double std_y = 0.0;
  double mean_error = 0.0;   // mean Euclidean position error
  double mean_nees = 0.0;    // mean 2-dof normalized estimation error squared
  std::size_t ticks_tracked = 0;  // window ticks with an associated confirmed track
};

// Per-station aggregates over the whole run.
struct StationStat {
  std::uint32_t station_id = 0;
  double mean_nees = 0.0;          // window mean over associated confirmed tracks
  std::vector<double> mean_trace;  // per tick: mean trace over confirmed tracks (NaN if none)
};

struct RunSummary {
  std::uint32_t eval_station_id = 0;
  std::size_t tick_count = 0;
  std::size_t window_start_tick = 0;  // first tick included in steady-state stats
  std::vector<PedestrianStat> pedestrians;
  std::vector<StationStat> stations;
};

// Aggregates a recorded run. Pedestrian statistics are taken at
// `eval_station_id` over ticks [window_fraction * N, N); when several
// confirmed tracks at that station associate to the same pedestrian the
// heaviest one is scored. Station statistics cover every station present in
// the records.
[[nodiscard]] RunSummary summarize(const std::vector<sim::TickRecord>& records,
                                   std::size_t pedestrian_count,
                                   std::uint32_t eval_station_id,
                                   double window_fraction = 0.8);

// Long-format dump of every confirmed track at every station and tick.
void write_ticks_csv(std::ostream& out, const std::vector<sim::TickRecord>& records);

// One row per pedestrian from a RunSummary.
void write_summary_csv(std::ostream& out, const RunSummary& summary);

// One row per station: the window-mean NEES.
void write_nees_csv(std::ostream& out, const RunSummary& summary);

// Per-track uncertainty trace over time for one station (plot-friendly).
void write_trace_csv(std::ostream& out, const std::vector<sim::TickRecord>& records,
                     std::uint32_t station_id);

}  // namespace cpf::metrics
