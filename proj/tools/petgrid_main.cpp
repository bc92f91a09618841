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

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "petgrid/config.hpp"
#include "petgrid/focal_prompt.hpp"
#include "petgrid/fusion_ref.hpp"
#include "petgrid/lesion_seg.hpp"
#include "petgrid/metrics.hpp"
#include "petgrid/nifti.hpp"
#include "petgrid/phantom.hpp"
#include "petgrid/pipeline.hpp"
#include "petgrid/report_parser.hpp"
#include "petgrid/resample.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace petgrid;

namespace {

Index3 parse_dims(const std::string& text) {
    Index3 out{};
    std::stringstream ss(text);
    std::string part;
    int i = 0;
    while (std::getline(ss, part, ',')) {
        if (i >= 3) throw Error("expected three comma-separated dims");
        out[i++] = std::stoll(part);
    }
    if (i != 3) throw Error("expected three comma-separated dims");
    return out;
}

int cmd_parse(const std::string& reports_dir, const std::string& lexicon_path,
              const std::string& patterns_path, const std::string& out_path) {
    const AnatomyLexicon lexicon = AnatomyLexicon::from_file(lexicon_path);
    const PatternSet& patterns = patterns_path.empty()
                                     ? PatternSet::defaults()
                                     : PatternSet::from_file(patterns_path);

    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(reports_dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".txt") {
            files.push_back(entry.path().string());
        }
    }
    std::sort(files.begin(), files.end());

    std::vector<LesionRecord> records;
    for (const std::string& file : files) {
        std::ifstream in(file);
        std::stringstream ss;
        ss << in.rdbuf();
        const std::string exam_id = fs::path(file).stem().string();
        for (LesionRecord& r : parse_report(ss.str(), exam_id, patterns, lexicon)) {
            records.push_back(std::move(r));
        }
    }
    write_records_jsonl(records, out_path);
    std::cout << "wrote " << records.size() << " records from " << files.size()
              << " reports to " << out_path << "\n";
    return 0;
}

int cmd_segment(const std::string& pet_path, const std::string& records_path,
                const std::string& out_dir, const std::string& params_path) {
    SegParams params;
    if (!params_path.empty()) params = PipelineConfig::load(params_path).seg;

    const Volume3D pet = load_nifti(pet_path, Modality::PET);
    const std::vector<LesionRecord> records = read_records_jsonl(records_path);
    fs::create_directories(out_dir);

    std::ofstream sidecar(fs::path(out_dir) / "segmentation.jsonl");
    int ok = 0, skipped = 0, failed = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const LesionRecord& r = records[i];
        json row;
        row["lesion_index"] = i;
        row["exam_id"] = r.exam_id;
        row["suv_max"] = r.suv_max;
        row["slice_number"] = r.slice_number;
        if (r.is_prior_reference) {
            row["status"] = "skipped_prior";
            ++skipped;
        } else {
            try {
                const SegResult seg = segment_lesion(pet, r, params);
                const std::string mask_path =
                    (fs::path(out_dir) /
                     (r.exam_id + "_L" + std::to_string(i) + "_mask.nii.gz"))
                        .string();
                save_nifti_mask(seg.mask, pet.spacing(), pet.origin(), mask_path);
                row["status"] = "ok";
                row["mask_path"] = mask_path;
                row["achieved_suv_max"] = seg.achieved_suv_max;
                row["final_threshold"] = seg.final_threshold;
                row["iterations_used"] = seg.iterations_used;
                row["converged"] = seg.converged;
                row["mask_voxels"] = seg.mask.voxel_count();
                ++ok;
            } catch (const std::exception& e) {
                row["status"] = "failed";
                row["message"] = e.what();
                ++failed;
            }
        }
        sidecar << row.dump() << "\n";
    }
    std::cout << "segmented " << ok << " lesions (" << skipped << " prior, "
              << failed << " failed) into " << out_dir << "\n";
    return failed == 0 ? 0 : 1;
}

int cmd_crop(const std::string& pet_path, const std::string& ct_path,
             const std::string& mask_path, std::uint64_t seed, double fraction,
             double margin, double min_side, const std::string& dims_text,
             const std::string& out_dir) {
    const Volume3D pet = load_nifti(pet_path, Modality::PET);
    const Volume3D ct = load_nifti(ct_path, Modality::CT);
    const LesionMask mask = load_nifti_mask(mask_path);
    const Index3 resampled = parse_dims(dims_text);

    const Vec3 centroid = mask_centroid(mask);
    const double side = base_side(mask, margin, min_side);
    const PerturbSpec spec{fraction, seed};
    const auto [center, side_p] = perturb(centroid, side, spec);
    const FocalCrop focal = crop(pet, ct, mask, center, side_p, resampled);

    fs::create_directories(out_dir);
    save_nifti(focal.pet_crop, (fs::path(out_dir) / "focal_pet.nii.gz").string());
    save_nifti(focal.ct_crop, (fs::path(out_dir) / "focal_ct.nii.gz").string());
    save_nifti_mask(focal.mask_crop, focal.pet_crop.spacing(),
                    focal.pet_crop.origin(),
                    (fs::path(out_dir) / "focal_mask.nii.gz").string());

    json meta;
    meta["centroid"] = {centroid[0], centroid[1], centroid[2]};
    meta["base_side"] = side;
    meta["center"] = {center[0], center[1], center[2]};
    meta["side"] = side_p;
    meta["box_lo"] = {focal.box_lo[0], focal.box_lo[1], focal.box_lo[2]};
    meta["box_side"] = focal.box_side;
    meta["seed"] = seed;
    meta["fraction"] = fraction;
    std::ofstream meta_out(fs::path(out_dir) / "crop.json");
    meta_out << meta.dump(2) << "\n";
    std::cout << "focal crop written to " << out_dir << " (box side "
              << focal.box_side << ")\n";
    return 0;
}

int cmd_encode(const std::string& pet_path, const std::string& ct_path,
               const std::string& mask_path, std::uint64_t seed, double fraction,
               const std::string& patch_text, int embed_dim, int proj_dim,
               int pool_factor, const std::string& focal_text,
               const std::string& out_path) {
    const Volume3D pet = load_nifti(pet_path, Modality::PET);
    const Volume3D ct = load_nifti(ct_path, Modality::CT);
    const LesionMask mask = load_nifti_mask(mask_path);

    PatchSpec spec{parse_dims(patch_text), embed_dim};
    const Index3 focal_dims = parse_dims(focal_text);
    const Index3 focal_patch =
        derive_focal_patch(pet.dims(), spec.patch_size, focal_dims);
    const RefWeights weights = RefWeights::generate(
        seed, spec.patch_volume(),
        focal_patch[0] * focal_patch[1] * focal_patch[2], embed_dim, proj_dim);

    const PerturbSpec perturb_spec{fraction, seed};
    const FocalCrop focal =
        make_focal_crop(pet, ct, mask, perturb_spec, 0.25, 16.0, focal_dims);
    const TokenMatrix fused = encode_fuse(pet, ct, mask, focal, spec, weights);
    const TokenMatrix projected = pool_project(fused, weights, pool_factor);
    write_tokens(projected, out_path);
    std::cout << "wrote " << projected.rows() << " x " << projected.cols
              << " tokens to " << out_path << "\n";
    return 0;
}

std::vector<std::pair<std::string, std::string>> read_id_text_jsonl(
    const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const json j = json::parse(line);
        out.emplace_back(j.at("id").get<std::string>(),
                         j.at("text").get<std::string>());
    }
    return out;
}

int cmd_eval(const std::string& pred_path, const std::string& ref_path,
             const std::string& human_path, const std::string& out_path) {
    const auto preds = read_id_text_jsonl(pred_path);
    const auto refs = read_id_text_jsonl(ref_path);
    std::map<std::string, std::string> ref_by_id(refs.begin(), refs.end());

    std::map<std::string, double> human;
    if (!human_path.empty()) {
        std::ifstream in(human_path);
        if (!in) throw Error("cannot open " + human_path);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const std::size_t comma = line.find(',');
            if (comma == std::string::npos) continue;
            const std::string id = line.substr(0, comma);
            try {
                human[id] = std::stod(line.substr(comma + 1));
            } catch (...) {
                continue;  // header or malformed row
            }
        }
    }

    std::vector<EvalPair> pairs;
    for (const auto& [id, text] : preds) {
        const auto it = ref_by_id.find(id);
        if (it == ref_by_id.end()) {
            throw Error("prediction id '" + id + "' has no reference");
        }
        EvalPair p;
        p.id = id;
        p.candidate = tokenize_caption(text);
        p.reference = tokenize_caption(it->second);
        const auto h = human.find(id);
        if (h != human.end()) p.human_score = h->second;
        pairs.push_back(std::move(p));
    }

    const EvalReport report = evaluate(pairs);
    std::ofstream out(out_path);
    if (!out) throw Error("cannot write " + out_path);
    out << report.to_json() << "\n";
    std::cout << "bleu4=" << report.corpus_bleu4
              << " rouge_l=" << report.corpus_rouge_l
              << " meteor=" << report.corpus_meteor
              << " cider=" << report.corpus_cider << " (" << pairs.size()
              << " pairs) -> " << out_path << "\n";
    return 0;
}

int cmd_pipeline(const std::string& config_path, int workers_override,
                 std::int64_t seed_override, const std::string& spacing_text,
                 const std::string& dims_text, bool verbose) {
    PipelineConfig cfg = PipelineConfig::load(config_path);
    if (workers_override > 0) cfg.workers = workers_override;
    if (seed_override >= 0) {
        cfg.perturb.rng_seed = static_cast<std::uint64_t>(seed_override);
    }
    if (!spacing_text.empty()) cfg.grid.target_spacing = std::stod(spacing_text);
    if (!dims_text.empty()) cfg.grid.target_dims = parse_dims(dims_text);
    cfg.validate();

    const PipelineSummary summary = run_pipeline(cfg, verbose);
    std::cout << summary.to_json() << "\n";
    return summary.success() ? 0 : 1;
}

int cmd_phantom(const std::string& out_dir, int blobs, std::uint64_t seed,
                const std::string& dims_text, double spacing, bool background,
                double noise) {
    Phantom p = random_phantom(seed, parse_dims(dims_text), blobs, background);
    p.spacing = {spacing, spacing, spacing};
    p.noise_amplitude = noise;
    write_phantom_exam(p, seed, out_dir);
    std::cout << "phantom exam with " << blobs << " blob(s) written to "
              << out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PET/CT lesion grounding toolkit"};
    app.require_subcommand(1);

    // parse
    auto* parse_cmd = app.add_subcommand("parse", "extract lesion records from reports");
    std::string reports_dir, lexicon_path, patterns_path, records_out;
    parse_cmd->add_option("--reports", reports_dir, "directory of *.txt reports")
        ->required();
    parse_cmd->add_option("--lexicon", lexicon_path, "anatomy lexicon TSV")->required();
    parse_cmd->add_option("--patterns", patterns_path, "pattern inventory JSON");
    parse_cmd->add_option("--out", records_out, "output records.jsonl")->required();

    // segment
    auto* segment_cmd = app.add_subcommand("segment", "recover lesion masks from records");
    std::string pet_path, records_path, masks_out, params_path;
    segment_cmd->add_option("--pet", pet_path, "PET volume (SUV), NIfTI")->required();
    segment_cmd->add_option("--records", records_path, "records.jsonl")->required();
    segment_cmd->add_option("--out", masks_out, "output mask directory")->required();
    segment_cmd->add_option("--params", params_path, "config with a [seg] table");

    // crop
    auto* crop_cmd = app.add_subcommand("crop", "extract a perturbed focal crop");
    std::string crop_pet, crop_ct, crop_mask, crop_out;
    std::uint64_t crop_seed = 0;
    double crop_fraction = 0.2, crop_margin = 0.25, crop_min_side = 16.0;
    std::string crop_dims = "32,32,32";
    crop_cmd->add_option("--pet", crop_pet)->required();
    crop_cmd->add_option("--ct", crop_ct)->required();
    crop_cmd->add_option("--mask", crop_mask)->required();
    crop_cmd->add_option("--seed", crop_seed, "perturbation seed");
    crop_cmd->add_option("--fraction", crop_fraction, "perturbation fraction");
    crop_cmd->add_option("--margin", crop_margin, "base side margin fraction");
    crop_cmd->add_option("--min-side", crop_min_side, "minimum cube side, voxels");
    crop_cmd->add_option("--dims", crop_dims, "focal resolution d,w,h");
    crop_cmd->add_option("--out", crop_out, "output directory")->required();

    // encode
    auto* encode_cmd = app.add_subcommand("encode", "tokenize and fuse PET/CT/mask");
    std::string enc_pet, enc_ct, enc_mask, enc_out;
    std::uint64_t enc_seed = 17;
    double enc_fraction = 0.0;
    std::string enc_patch = "16,16,16", enc_focal = "96,96,176";
    int enc_embed = 64, enc_proj = 64, enc_pool = 2;
    encode_cmd->add_option("--pet", enc_pet)->required();
    encode_cmd->add_option("--ct", enc_ct)->required();
    encode_cmd->add_option("--mask", enc_mask)->required();
    encode_cmd->add_option("--seed", enc_seed, "weight/perturbation seed");
    encode_cmd->add_option("--fraction", enc_fraction,
                           "focal perturbation fraction (0 = deterministic)");
    encode_cmd->add_option("--patch", enc_patch, "global patch size d,w,h");
    encode_cmd->add_option("--focal-dims", enc_focal, "focal crop resolution d,w,h");
    encode_cmd->add_option("--embed-dim", enc_embed);
    encode_cmd->add_option("--proj-dim", enc_proj);
    encode_cmd->add_option("--pool", enc_pool, "spatial pool factor");
    encode_cmd->add_option("--out", enc_out, "output token file")->required();

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "score generated findings");
    std::string pred_path, ref_path, human_path, report_out;
    eval_cmd->add_option("--pred", pred_path, "predictions JSONL {id, text}")
        ->required();
    eval_cmd->add_option("--ref", ref_path, "references JSONL {id, text}")->required();
    eval_cmd->add_option("--human", human_path, "human scores CSV id,score");
    eval_cmd->add_option("--out", report_out, "output report JSON")->required();

    // pipeline
    auto* pipeline_cmd = app.add_subcommand("pipeline", "run the full batch pipeline");
    std::string config_path, pl_spacing, pl_dims;
    int pl_workers = 0;
    std::int64_t pl_seed = -1;
    bool pl_verbose = false;
    pipeline_cmd->add_option("--config", config_path, "TOML or JSON config")
        ->required();
    pipeline_cmd->add_option("--workers", pl_workers, "worker threads");
    pipeline_cmd->add_option("--seed", pl_seed, "perturbation base seed");
    pipeline_cmd->add_option("--spacing", pl_spacing, "canonical spacing, mm");
    pipeline_cmd->add_option("--dims", pl_dims, "canonical dims d,w,h");
    pipeline_cmd->add_flag("--verbose", pl_verbose);

    // phantom
    auto* phantom_cmd = app.add_subcommand("phantom", "generate a synthetic exam");
    std::string ph_out, ph_dims = "96,96,176";
    int ph_blobs = 3;
    std::uint64_t ph_seed = 1;
    double ph_spacing = 3.0, ph_noise = 0.0;
    bool ph_background = false;
    phantom_cmd->add_option("--out", ph_out, "output exam directory")->required();
    phantom_cmd->add_option("--blobs", ph_blobs, "number of lesions");
    phantom_cmd->add_option("--seed", ph_seed);
    phantom_cmd->add_option("--dims", ph_dims, "grid dims d,w,h");
    phantom_cmd->add_option("--spacing", ph_spacing, "voxel spacing, mm");
    phantom_cmd->add_flag("--background", ph_background, "uniform background uptake");
    phantom_cmd->add_option("--noise", ph_noise, "uniform noise amplitude");

    CLI11_PARSE(app, argc, argv);

    try {
        if (parse_cmd->parsed()) {
            return cmd_parse(reports_dir, lexicon_path, patterns_path, records_out);
        }
        if (segment_cmd->parsed()) {
            return cmd_segment(pet_path, records_path, masks_out, params_path);
        }
        if (crop_cmd->parsed()) {
            return cmd_crop(crop_pet, crop_ct, crop_mask, crop_seed, crop_fraction,
                            crop_margin, crop_min_side, crop_dims, crop_out);
        }
        if (encode_cmd->parsed()) {
            return cmd_encode(enc_pet, enc_ct, enc_mask, enc_seed, enc_fraction,
                              enc_patch, enc_embed, enc_proj, enc_pool, enc_focal,
                              enc_out);
        }
        if (eval_cmd->parsed()) {
            return cmd_eval(pred_path, ref_path, human_path, report_out);
        }
        if (pipeline_cmd->parsed()) {
            return cmd_pipeline(config_path, pl_workers, pl_seed, pl_spacing,
                                pl_dims, pl_verbose);
        }
        if (phantom_cmd->parsed()) {
            return cmd_phantom(ph_out, ph_blobs, ph_seed, ph_dims, ph_spacing,
                               ph_background, ph_noise);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
