/*
 * Copyright 2026 petgrid authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef PETGRID_PIPELINE_HPP
#define PETGRID_PIPELINE_HPP

#include <string>
#include <vector>

#include "petgrid/config.hpp"
#include "petgrid/report_parser.hpp"

namespace petgrid {

/// Per-lesion outcome in the pipeline summary. Soft failures are recorded
/// here, never thrown out of run_pipeline.
struct LesionOutcome {
    std::string exam_id;
    int lesion_index = 0;
    LesionRecord record;
    std::string status;   // ok | skipped_prior | failed
    std::string message;  // failure reason, empty otherwise

    std::string mask_path;
    std::string crop_pet_path;
    std::string crop_ct_path;
    std::string crop_mask_path;
    std::string tokens_path;
    std::string meta_path;

    double achieved_suv_max = 0.0;
    double final_threshold = 0.0;
    int iterations_used = 0;
    bool converged = false;
    std::int64_t mask_voxels = 0;
};

struct PipelineSummary {
    int exams = 0;
    int records_total = 0;
    int lesions_ok = 0;
    int lesions_skipped_prior = 0;
    int lesions_failed = 0;
    std::vector<LesionOutcome> lesions;  // sorted by (exam_id, lesion_index)

    bool success() const { return lesions_failed == 0; }
    std::string to_json() const;
};

/// End-to-end batch: for every exam directory under cfg.input_dir
/// (report.txt + pet.nii[.gz], optional ct.nii[.gz]), parse the report and,
/// for each non-prior lesion record, segment, crop and encode. Outputs are
/// content-addressed (exam, lesion, inputs and parameters hashed into the
/// file names), so re-running skips finished lesions and parallel runs write
/// identical bytes. Emits records.jsonl, segmentation.jsonl, summary.json
/// plus masks/, crops/, tokens/, meta/ under cfg.output_dir.
PipelineSummary run_pipeline(const PipelineConfig& cfg, bool verbose = false);

}  // namespace petgrid

#endif  // PETGRID_PIPELINE_HPP
