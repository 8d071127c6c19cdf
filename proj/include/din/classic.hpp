#pragma once

#include "din/frame.hpp"

namespace din {

// Single-frame deinterlacers. All of them reconstruct the frame at the top
// field's time instant and keep the top-field rows (0, 2, 4, ...) unchanged.

/// Keeps both fields as they are.
Frame weave(const Frame& interlaced);

/// Replaces each bottom-field row by the mean of the top-field rows above and
/// below; the last row repeats the row above it.
Frame bob_line_average(const Frame& interlaced);

/// Edge line average. For each missing pixel, picks among the averages along
/// the 135-degree, vertical and 45-degree directions the one whose endpoints
/// differ least (summed over channels). Ties go to vertical, then to the
/// left-leaning diagonal. Border columns and the last row use line average.
Frame ela(const Frame& interlaced);

/// Fills missing rows from the co-located bottom-field rows. Same result as
/// weave; kept separate as the temporal candidate of motion_adaptive.
Frame temporal_insert(const Frame& interlaced);

/// Per missing pixel, uses the temporal candidate where it differs from the
/// line average by at most `threshold` (in [0, 1] intensity units, maximum
/// over channels) and the line average elsewhere.
Frame motion_adaptive(const Frame& interlaced, double threshold);

}  // namespace din
