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

#include "petgrid/pipeline.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "petgrid/focal_prompt.hpp"
#include "petgrid/fusion_ref.hpp"
#include "petgrid/lesion_seg.hpp"
#include "petgrid/nifti.hpp"
#include "petgrid/resample.hpp"

namespace petgrid {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string find_volume(const fs::path& exam_dir, const std::string& stem) {
    for (const char* ext : {".nii.gz", ".nii"}) {
        const fs::path p = exam_dir / (stem + ext);
        if (fs::exists(p)) return p.string();
    }
    return {};
}

std::string hex64(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// Everything that affects a lesion's outputs goes into its content key.
std::string params_fingerprint(const PipelineConfig& cfg) {
    std::ostringstream ss;
    ss.precision(17);
    ss << cfg.grid.target_spacing << '|' << index3_to_string(cfg.grid.target_dims)
       << '|' << cfg.seg.initial_fraction << '|' << cfg.seg.suv_tolerance << '|'
       << cfg.seg.connectivity << '|' << cfg.seg.refine_step << '|'
       << cfg.seg.stabilize_eps << '|' << cfg.seg.max_iters << '|'
       << cfg.seg.background_margin << '|' << cfg.perturb.fraction << '|'
       << cfg.perturb.rng_seed << '|' << cfg.crop_margin_fraction << '|'
       << cfg.crop_min_side << '|' << index3_to_string(cfg.focal_dims) << '|'
       << index3_to_string(cfg.patch.patch_size) << '|' << cfg.patch.embed_dim
       << '|' << cfg.proj_dim << '|' << cfg.pool_factor << '|' << cfg.weight_seed
       << '|' << cfg.mask_table_bins;
    return ss.str();
}

std::uint64_t volume_content_hash(const Volume3D& v) {
    std::uint64_t h = fnv1a64(v.data().data(), v.data().size() * sizeof(float));
    h = fnv1a64(&v.dims(), sizeof(Index3), h);
    h = fnv1a64(&v.spacing(), sizeof(Vec3), h);
    return h;
}

struct ExamInputs {
    std::string exam_id;
    Volume3D pet;
    Volume3D ct;
    std::int64_t source_depth = 0;
    Vec3 source_spacing{1.0, 1.0, 1.0};
    std::uint64_t content_hash = 0;
    std::vector<LesionRecord> records;
};

// Outcome paths are stored relative to the output root so summaries and
// sidecars are byte-identical regardless of where the output lives.
struct OutputPaths {
    fs::path root;

    std::string resolve(const std::string& rel) const {
        return (root / rel).string();
    }
};

json outcome_meta_json(const LesionOutcome& o) {
    json j;
    j["exam_id"] = o.exam_id;
    j["lesion_index"] = o.lesion_index;
    j["record"] = json::parse(record_to_json(o.record));
    j["achieved_suv_max"] = o.achieved_suv_max;
    j["final_threshold"] = o.final_threshold;
    j["iterations_used"] = o.iterations_used;
    j["converged"] = o.converged;
    j["mask_voxels"] = o.mask_voxels;
    j["mask_path"] = o.mask_path;
    j["crop_pet_path"] = o.crop_pet_path;
    j["crop_ct_path"] = o.crop_ct_path;
    j["crop_mask_path"] = o.crop_mask_path;
    j["tokens_path"] = o.tokens_path;
    return j;
}

bool load_cached_outcome(LesionOutcome& o, const OutputPaths& paths) {
    std::ifstream in(paths.resolve(o.meta_path));
    if (!in) return false;
    json j;
    try {
        in >> j;
        const std::array<std::string, 5> required = {
            j.at("mask_path").get<std::string>(),
            j.at("crop_pet_path").get<std::string>(),
            j.at("crop_ct_path").get<std::string>(),
            j.at("crop_mask_path").get<std::string>(),
            j.at("tokens_path").get<std::string>()};
        for (const std::string& p : required) {
            if (!fs::exists(paths.resolve(p))) return false;
        }
        o.achieved_suv_max = j.at("achieved_suv_max").get<double>();
        o.final_threshold = j.at("final_threshold").get<double>();
        o.iterations_used = j.at("iterations_used").get<int>();
        o.converged = j.at("converged").get<bool>();
        o.mask_voxels = j.at("mask_voxels").get<std::int64_t>();
        o.mask_path = j.at("mask_path").get<std::string>();
        o.crop_pet_path = j.at("crop_pet_path").get<std::string>();
        o.crop_ct_path = j.at("crop_ct_path").get<std::string>();
        o.crop_mask_path = j.at("crop_mask_path").get<std::string>();
        o.tokens_path = j.at("tokens_path").get<std::string>();
        o.status = "ok";
        return true;
    } catch (const json::exception&) {
        return false;
    }
}

void process_lesion(const PipelineConfig& cfg, const ExamInputs& exam,
                    const RefWeights& weights, const OutputPaths& paths,
                    const std::string& fingerprint, LesionOutcome& o,
                    bool verbose) {
    const std::string base =
        o.exam_id + "_L" + std::to_string(o.lesion_index) + "_" +
        hex64(fnv1a64(fingerprint + '|' + record_to_json(o.record) + '|' +
                          std::to_string(o.lesion_index),
                      exam.content_hash));
    o.mask_path = "masks/" + base + "_mask.nii.gz";
    o.crop_pet_path = "crops/" + base + "_pet.nii.gz";
    o.crop_ct_path = "crops/" + base + "_ct.nii.gz";
    o.crop_mask_path = "crops/" + base + "_maskcrop.nii.gz";
    o.tokens_path = "tokens/" + base + ".bin";
    o.meta_path = "meta/" + base + ".json";

    if (load_cached_outcome(o, paths)) {
        if (verbose) std::cerr << "cached: " << base << "\n";
        return;
    }

    try {
        // Reports number slices on the original grid; carry through resampling.
        const std::int64_t slice = map_depth_to_target(
            {exam.source_depth, 1, 1}, exam.source_spacing,
            o.record.slice_index(), cfg.grid);
        const SegResult seg = segment_lesion(exam.pet, o.record.suv_max, slice,
                                             cfg.seg);
        save_nifti_mask(seg.mask, exam.pet.spacing(), exam.pet.origin(),
                        paths.resolve(o.mask_path));

        const std::uint64_t lesion_seed =
            derive_seed(cfg.perturb.rng_seed, o.exam_id,
                        static_cast<std::uint64_t>(o.lesion_index));
        const PerturbSpec local{cfg.perturb.fraction, lesion_seed};
        const Vec3 centroid = mask_centroid(seg.mask);
        const double side =
            base_side(seg.mask, cfg.crop_margin_fraction, cfg.crop_min_side);
        const auto [c_tilde, r_tilde] = perturb(centroid, side, local);
        const FocalCrop focal = crop(exam.pet, exam.ct, seg.mask, c_tilde,
                                     r_tilde, cfg.focal_dims);
        save_nifti(focal.pet_crop, paths.resolve(o.crop_pet_path));
        save_nifti(focal.ct_crop, paths.resolve(o.crop_ct_path));
        save_nifti_mask(focal.mask_crop, focal.pet_crop.spacing(),
                        focal.pet_crop.origin(), paths.resolve(o.crop_mask_path));

        const TokenMatrix fused =
            encode_fuse(exam.pet, exam.ct, seg.mask, focal, cfg.patch, weights);
        const TokenMatrix projected =
            pool_project(fused, weights, cfg.pool_factor);
        write_tokens(projected, o.tokens_path);

        o.status = "ok";
        o.achieved_suv_max = seg.achieved_suv_max;
        o.final_threshold = seg.final_threshold;
        o.iterations_used = seg.iterations_used;
        o.converged = seg.converged;
        o.mask_voxels = seg.mask.voxel_count();

        json meta = outcome_meta_json(o);
        meta["crop"] = {{"centroid", {centroid[0], centroid[1], centroid[2]}},
                        {"base_side", side},
                        {"center", {c_tilde[0], c_tilde[1], c_tilde[2]}},
                        {"side", r_tilde},
                        {"box_lo", {focal.box_lo[0], focal.box_lo[1], focal.box_lo[2]}},
                        {"box_side", focal.box_side},
                        {"seed", lesion_seed}};
        std::ofstream meta_out(o.meta_path);
        meta_out << meta.dump(2) << "\n";
        if (!meta_out) throw Error("cannot write " + o.meta_path);
    } catch (const std::exception& e) {
        o.status = "failed";
        o.message = e.what();
    }
}

}  // namespace

PipelineSummary run_pipeline(const PipelineConfig& cfg, bool verbose) {
    cfg.validate();
    if (cfg.input_dir.empty() || cfg.output_dir.empty()) {
        throw ConfigInvalid("paths.input and paths.output are required");
    }
    if (cfg.lexicon_path.empty()) {
        throw ConfigInvalid("paths.lexicon is required");
    }
    if (!fs::exists(cfg.input_dir)) {
        throw ConfigInvalid("input directory does not exist: " + cfg.input_dir);
    }

    const AnatomyLexicon lexicon = AnatomyLexicon::from_file(cfg.lexicon_path);
    const PatternSet& patterns = cfg.patterns_path.empty()
                                     ? PatternSet::defaults()
                                     : PatternSet::from_file(cfg.patterns_path);

    OutputPaths paths{fs::path(cfg.output_dir) / "masks",
                      fs::path(cfg.output_dir) / "crops",
                      fs::path(cfg.output_dir) / "tokens",
                      fs::path(cfg.output_dir) / "meta"};
    fs::create_directories(paths.masks);
    fs::create_directories(paths.crops);
    fs::create_directories(paths.tokens);
    fs::create_directories(paths.meta);

    std::vector<std::string> exam_dirs;
    for (const auto& entry : fs::directory_iterator(cfg.input_dir)) {
        if (entry.is_directory()) exam_dirs.push_back(entry.path().string());
    }
    std::sort(exam_dirs.begin(), exam_dirs.end());

    const Index3 focal_patch = derive_focal_patch(
        cfg.grid.target_dims, cfg.patch.patch_size, cfg.focal_dims);
    const RefWeights weights = RefWeights::generate(
        cfg.weight_seed, cfg.patch.patch_volume(),
        focal_patch[0] * focal_patch[1] * focal_patch[2], cfg.patch.embed_dim,
        cfg.proj_dim, cfg.mask_table_bins);
    const std::string fingerprint = params_fingerprint(cfg);

    PipelineSummary summary;
    std::vector<LesionRecord> all_records;

    for (const std::string& dir : exam_dirs) {
        const std::string exam_id = fs::path(dir).filename().string();
        const fs::path report_path = fs::path(dir) / "report.txt";
        const std::string pet_path = find_volume(dir, "pet");
        if (!fs::exists(report_path) || pet_path.empty()) {
            if (verbose) {
                std::cerr << "skipping " << exam_id
                          << ": needs report.txt and pet.nii[.gz]\n";
            }
            continue;
        }
        ++summary.exams;

        std::ifstream report_in(report_path);
        std::stringstream report_ss;
        report_ss << report_in.rdbuf();

        ExamInputs exam{exam_id,
                        load_nifti(pet_path, Modality::PET),
                        Volume3D({1, 1, 1}, {1, 1, 1}, {0, 0, 0}, Modality::CT),
                        0,
                        {1.0, 1.0, 1.0},
                        0,
                        parse_report(report_ss.str(), exam_id, patterns, lexicon)};
        exam.source_depth = exam.pet.dims()[0];
        exam.source_spacing = exam.pet.spacing();

        const std::string ct_path = find_volume(dir, "ct");
        Volume3D ct_raw = ct_path.empty()
                              ? Volume3D(exam.pet.dims(), exam.pet.spacing(),
                                         exam.pet.origin(), Modality::CT)
                              : load_nifti(ct_path, Modality::CT);
        if (ct_raw.dims() != exam.pet.dims()) {
            throw Error("exam " + exam_id + ": PET and CT grids differ");
        }

        exam.ct = resample(ct_raw, cfg.grid);
        exam.pet = resample(exam.pet, cfg.grid);
        exam.content_hash =
            fnv1a64(pet_path, volume_content_hash(exam.pet) ^
                                  volume_content_hash(exam.ct));

        summary.records_total += static_cast<int>(exam.records.size());
        for (const LesionRecord& r : exam.records) all_records.push_back(r);

        // One task per lesion; the exam volumes are shared read-only.
        std::vector<LesionOutcome> outcomes(exam.records.size());
        for (std::size_t i = 0; i < exam.records.size(); ++i) {
            outcomes[i].exam_id = exam_id;
            outcomes[i].lesion_index = static_cast<int>(i);
            outcomes[i].record = exam.records[i];
            if (exam.records[i].is_prior_reference) {
                outcomes[i].status = "skipped_prior";
                outcomes[i].message = "sentence references a prior study";
            }
        }

        std::atomic<std::size_t> next{0};
        auto worker = [&]() {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= outcomes.size()) break;
                if (outcomes[i].status == "skipped_prior") continue;
                process_lesion(cfg, exam, weights, paths, fingerprint,
                               outcomes[i], verbose);
            }
        };
        if (cfg.workers <= 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            for (int t = 0; t < cfg.workers; ++t) pool.emplace_back(worker);
            for (auto& t : pool) t.join();
        }

        for (LesionOutcome& o : outcomes) {
            if (o.status == "ok") {
                ++summary.lesions_ok;
            } else if (o.status == "skipped_prior") {
                ++summary.lesions_skipped_prior;
            } else {
                ++summary.lesions_failed;
            }
            summary.lesions.push_back(std::move(o));
        }
    }

    write_records_jsonl(all_records,
                        (fs::path(cfg.output_dir) / "records.jsonl").string());
    {
        std::ofstream seg_out(fs::path(cfg.output_dir) / "segmentation.jsonl");
        for (const LesionOutcome& o : summary.lesions) {
            if (o.status != "ok") continue;
            seg_out << outcome_meta_json(o).dump() << "\n";
        }
    }
    {
        std::ofstream sum_out(fs::path(cfg.output_dir) / "summary.json");
        sum_out << summary.to_json() << "\n";
    }
    return summary;
}

std::string PipelineSummary::to_json() const {
    json j;
    j["exams"] = exams;
    j["records_total"] = records_total;
    j["lesions_ok"] = lesions_ok;
    j["lesions_skipped_prior"] = lesions_skipped_prior;
    j["lesions_failed"] = lesions_failed;
    j["lesions"] = json::array();
    for (const LesionOutcome& o : lesions) {
        json row;
        row["exam_id"] = o.exam_id;
        row["lesion_index"] = o.lesion_index;
        row["status"] = o.status;
        if (!o.message.empty()) row["message"] = o.message;
        if (o.status == "ok") {
            row["achieved_suv_max"] = o.achieved_suv_max;
            row["final_threshold"] = o.final_threshold;
            row["iterations_used"] = o.iterations_used;
            row["converged"] = o.converged;
            row["mask_voxels"] = o.mask_voxels;
            row["mask_path"] = o.mask_path;
            row["tokens_path"] = o.tokens_path;
        }
        j["lesions"].push_back(std::move(row));
    }
    return j.dump(2);
}

}  // namespace petgrid
