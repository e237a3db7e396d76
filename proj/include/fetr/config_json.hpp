#pragma once

#include <json.hpp>

#include "fetr/trainer.hpp"
#include "fetr/types.hpp"

namespace fetr::io {

/// Config echo used in report JSON; the same schema is accepted as a CLI config file.
nlohmann::json config_to_json(const FetrConfig& config);

/// Overlays the keys present in `j` onto `base`. Unknown keys are rejected.
FetrConfig config_from_json(const nlohmann::json& j, FetrConfig base = {});

nlohmann::json metric_to_json(const MetricResult& metric);

}  // namespace fetr::io
