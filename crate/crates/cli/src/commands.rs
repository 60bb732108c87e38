use std::collections::BTreeMap;
use std::fs;
use std::time::Instant;

use anyhow::{bail, Context, Result};

use dyncrowd_core::geometry::{direction_angle, euclidean_distance, Point2};
use dyncrowd_core::io as dio;
use dyncrowd_core::metrics::{
    cmdd, count_series, cteo, ctel, ClusterFrame, DistanceMode, MembershipReplay, MetricsReport,
};
use dyncrowd_core::predictor::{evaluate_substitution, peak_rss_mib};
use dyncrowd_core::synth::{generate, SceneSpec};
use dyncrowd_core::types::{CentroidTrack, FrameIndex, FrameSeries, PedestrianId};
use dyncrowd_core::{Config64, Engine};

use crate::{ensure_dir, load_config, parse_sources};

fn write_file(dir: &std::path::Path, name: &str, contents: &[u8]) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn cluster(args: crate::ClusterArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let (series, warnings) =
        dio::read_mot_path::<f64>(&args.input).with_context(|| "reading input")?;
    for w in &warnings {
        eprintln!("warning: line {}: {}", w.line, w.message);
    }
    ensure_dir(&args.output)?;

    let t0 = Instant::now();
    let run = Engine::run(&series, &cfg, false)?;
    let wall = t0.elapsed();

    let mut centroids = Vec::new();
    dio::write_centroids(&run.tracks, &mut centroids)?;
    write_file(&args.output, "centroids.mot", &centroids)?;

    let mut events = Vec::new();
    dio::write_events(&run.events, &mut events)?;
    write_file(&args.output, "events.jsonl", &events)?;

    let counts = count_series(&run.events, &series);
    let mut counts_text = String::from("frame\tclustered\traw\n");
    for (f, c, r) in &counts {
        counts_text.push_str(&format!("{f}\t{c}\t{r}\n"));
    }
    write_file(&args.output, "counts.txt", counts_text.as_bytes())?;

    write_file(
        &args.output,
        "config.toml",
        dio::write_config(&cfg).as_bytes(),
    )?;
    fs::copy(&args.input, args.output.join("input.mot")).with_context(|| "copying input")?;

    let frames = run.final_frame + 1;
    let summary = format!(
        "frames\t{}\nn_peds\t{}\nclusters_multi\t{}\nclusters_single\t{}\nevents\t{}\n",
        frames,
        run.n_peds,
        run.n_clusters_multi,
        run.n_clusters_single,
        run.events.len()
    );
    write_file(&args.output, "summary.txt", summary.as_bytes())?;

    let fps = frames as f64 / wall.as_secs_f64().max(1e-9);
    eprintln!(
        "clustered {} pedestrians over {} frames into {} multi / {} singleton clusters",
        run.n_peds, frames, run.n_clusters_multi, run.n_clusters_single
    );
    eprintln!(
        "wall {:.3}s ({:.0} frames/s), peak rss {}",
        wall.as_secs_f64(),
        fps,
        peak_rss_mib().map_or("n/a".into(), |m| format!("{m:.1} MiB"))
    );
    Ok(())
}

/// Per-pedestrian heading at each observed frame, derived the same way the
/// engine does it: current minus previous observed location.
fn headings_by_frame(
    series: &FrameSeries<f64>,
) -> BTreeMap<PedestrianId, BTreeMap<FrameIndex, Option<f64>>> {
    let mut out: BTreeMap<PedestrianId, BTreeMap<FrameIndex, Option<f64>>> = BTreeMap::new();
    for (id, track) in series.tracks() {
        let mut per_frame = BTreeMap::new();
        let mut prev: Option<Point2<f64>> = None;
        for (frame, p) in track {
            let theta = prev.and_then(|q| direction_angle(p.x - q.x, p.y - q.y));
            per_frame.insert(frame, theta);
            prev = Some(p);
        }
        out.insert(id, per_frame);
    }
    out
}

pub fn evaluate(args: crate::EvaluateArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let (series, _) = dio::read_mot_path::<f64>(&args.input).with_context(|| "reading input")?;
    let tracks = {
        let file = fs::File::open(&args.centroids).with_context(|| "opening centroids")?;
        dio::read_centroids::<f64>(std::io::BufReader::new(file))?
    };
    let events = {
        let file = fs::File::open(&args.events).with_context(|| "opening events")?;
        dio::read_events(std::io::BufReader::new(file))?
    };

    let input_max = series.max_frame().unwrap_or(0);
    let centroid_max = tracks
        .iter()
        .filter_map(|t| t.samples.last().map(|s| s.frame))
        .max()
        .unwrap_or(0);
    if centroid_max > input_max {
        bail!(
            "mismatched frame ranges: centroids reach frame {centroid_max}, input ends at {input_max}"
        );
    }

    let report = build_report(&cfg, &series, &tracks, &events)?;
    ensure_dir(&args.output)?;
    for (name, table) in dio::report_tables(&report) {
        write_file(&args.output, &format!("{name}.txt"), table.as_bytes())?;
    }
    let summary = dio::write_report(&report);
    write_file(&args.output, "report.txt", summary.as_bytes())?;
    print!("{summary}");
    Ok(())
}

pub(crate) fn build_report(
    cfg: &Config64,
    series: &FrameSeries<f64>,
    tracks: &[CentroidTrack<f64>],
    events: &[dyncrowd_core::EngineEvent],
) -> Result<MetricsReport<f64>> {
    let headings = headings_by_frame(series);
    let positions: BTreeMap<PedestrianId, BTreeMap<FrameIndex, Point2<f64>>> = series
        .tracks()
        .into_iter()
        .map(|(id, t)| (id, t.into_iter().collect()))
        .collect();

    // member snapshots per (cluster, frame) with the centroid of that frame
    let mut replay = MembershipReplay::new(events);
    let mut cluster_frames: Vec<ClusterFrame<f64>> = Vec::new();
    let mut samples_by_frame: BTreeMap<FrameIndex, Vec<(usize, usize)>> = BTreeMap::new();
    for (ti, track) in tracks.iter().enumerate() {
        for (si, s) in track.samples.iter().enumerate() {
            samples_by_frame.entry(s.frame).or_default().push((ti, si));
        }
    }
    for (&frame, entries) in &samples_by_frame {
        let membership = replay.advance_to(frame).clone();
        for &(ti, si) in entries {
            let track = &tracks[ti];
            let sample = track.samples[si];
            let members: Vec<(Point2<f64>, Option<f64>)> = membership
                .iter()
                .filter(|(_, cid)| **cid == track.cluster_id)
                .filter_map(|(ped, _)| {
                    let p = positions.get(ped)?.get(&frame)?;
                    let theta = headings.get(ped).and_then(|h| h.get(&frame)).copied().flatten();
                    Some((*p, theta))
                })
                .collect();
            if !members.is_empty() {
                cluster_frames.push(ClusterFrame {
                    frame,
                    cluster: track.cluster_id,
                    centroid: sample,
                    members,
                });
            }
        }
    }

    let cmdd_result = cmdd(&cluster_frames, cfg.min_cmdd_members).ok();
    let t_loc = cfg.cteo_threshold_loc();
    let t_dir = cfg.cteo_threshold_dir();
    let (n_single, n_multi) = tracks.iter().fold((0usize, 0usize), |(s, m), t| {
        let peak = t.samples.iter().map(|x| x.members).max().unwrap_or(0);
        if peak >= 2 {
            (s, m + 1)
        } else {
            (s + 1, m)
        }
    });

    Ok(MetricsReport {
        cmdd_location: cmdd_result.as_ref().map(|r| r.location),
        cmdd_direction: cmdd_result.as_ref().and_then(|r| r.direction),
        cmdd_pairs: cmdd_result.as_ref().map_or(0, |r| r.pairs),
        cteo_location: cteo(tracks, t_loc, DistanceMode::Location).ok(),
        cteo_direction: cteo(tracks, t_dir, DistanceMode::Direction).ok(),
        ctel_location: ctel(tracks, t_loc, DistanceMode::Location).ok(),
        ctel_direction: ctel(tracks, t_dir, DistanceMode::Direction).ok(),
        threshold_loc: t_loc,
        threshold_dir: t_dir,
        count_series: count_series(events, series),
        ade: None,
        fde: None,
        n_clusters_single: n_single,
        n_clusters_multi: n_multi,
        n_peds: series.ids().len(),
    })
}

pub fn predict(args: crate::PredictArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let sources = parse_sources(&args.source)?;
    let (observations, _) =
        dio::read_mot_path::<f64>(&args.input).with_context(|| "reading input")?;
    let truth = match &args.truth {
        Some(p) => dio::read_mot_path::<f64>(p).with_context(|| "reading truth")?.0,
        None => observations.clone(),
    };

    let report = evaluate_substitution(
        &observations,
        &truth,
        &cfg,
        &sources,
        args.horizon,
        args.history,
        args.keep_fraction,
        args.seed,
    )?;

    ensure_dir(&args.output)?;
    let mut table = String::from("source\tnodes\tevaluated\tade_px\tfde_px\tkeep_fraction\n");
    let mut perf = String::from("source\twall_us\tpeak_rss_mib\n");
    for o in &report.outcomes {
        table.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            o.source.name(),
            o.nodes,
            o.evaluated,
            dio::format_sig(o.ade),
            dio::format_sig(o.fde),
            o.keep_fraction
                .map_or("n/a".to_string(), dio::format_sig),
        ));
        perf.push_str(&format!(
            "{}\t{:.1}\t{}\n",
            o.source.name(),
            o.predict_wall.as_secs_f64() * 1e6,
            o.peak_rss_mib
                .map_or("n/a".to_string(), |m| format!("{m:.1}")),
        ));
    }
    write_file(&args.output, "comparison.txt", table.as_bytes())?;
    write_file(&args.output, "comparison_perf.txt", perf.as_bytes())?;
    print!("{table}");
    eprintln!(
        "split at frame {}, horizon {}, history {}",
        report.split_frame, report.horizon, report.history
    );
    eprint!("{perf}");
    Ok(())
}

pub fn synth(args: crate::SynthArgs) -> Result<()> {
    let mut spec: SceneSpec = match &args.spec {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).map_err(|e| anyhow::anyhow!("scene spec: {e}"))?
        }
        None => SceneSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let scene = generate::<f64>(&spec)?;
    ensure_dir(&args.output)?;

    let mut noisy = Vec::new();
    dio::write_series(&scene.observations, &mut noisy)?;
    write_file(&args.output, "observations.mot", &noisy)?;

    let mut truth = Vec::new();
    dio::write_series(&scene.truth, &mut truth)?;
    write_file(&args.output, "truth.mot", &truth)?;

    let mut labels = String::from("frame\tid\tgroup\n");
    for (frame, per_frame) in &scene.labels {
        for (ped, group) in per_frame {
            labels.push_str(&format!("{frame}\t{ped}\t{group}\n"));
        }
    }
    write_file(&args.output, "labels.txt", labels.as_bytes())?;

    let spec_text = toml::to_string(&spec).map_err(|e| anyhow::anyhow!("spec serialize: {e}"))?;
    write_file(&args.output, "scene.toml", spec_text.as_bytes())?;

    eprintln!(
        "generated {} pedestrians in {} groups over {} frames",
        scene.n_peds, scene.n_groups, spec.n_frames
    );
    Ok(())
}

pub fn report(args: crate::ReportArgs) -> Result<()> {
    if !args.run.is_dir() {
        bail!("run directory {} does not exist", args.run.display());
    }
    let cfg = dio::read_config_path::<f64>(args.run.join("config.toml"))
        .with_context(|| "reading run config")?;
    let (series, _) = dio::read_mot_path::<f64>(args.run.join("input.mot"))
        .with_context(|| "reading run input")?;
    let tracks = {
        let file = fs::File::open(args.run.join("centroids.mot"))
            .with_context(|| "opening run centroids")?;
        dio::read_centroids::<f64>(std::io::BufReader::new(file))?
    };
    let events = {
        let file =
            fs::File::open(args.run.join("events.jsonl")).with_context(|| "opening run events")?;
        dio::read_events(std::io::BufReader::new(file))?
    };
    ensure_dir(&args.output)?;

    // per-frame pedestrian counts, one two-column file per curve
    let counts = count_series(&events, &series);
    let mut clustered = String::new();
    let mut raw = String::new();
    for (f, c, r) in &counts {
        clustered.push_str(&format!("{f}\t{c}\n"));
        raw.push_str(&format!("{f}\t{r}\n"));
    }
    write_file(&args.output, "counts_clustered.txt", clustered.as_bytes())?;
    write_file(&args.output, "counts_raw.txt", raw.as_bytes())?;

    // centroid displacement series: mean and max step length per frame
    let mut steps_by_frame: BTreeMap<FrameIndex, Vec<f64>> = BTreeMap::new();
    for track in &tracks {
        for pair in track.samples.windows(2) {
            if pair[1].frame == pair[0].frame + 1 {
                steps_by_frame
                    .entry(pair[1].frame)
                    .or_default()
                    .push(euclidean_distance(pair[0].point(), pair[1].point()));
            }
        }
    }
    let mut mean_text = String::new();
    let mut max_text = String::new();
    for (f, steps) in &steps_by_frame {
        let mean = steps.iter().sum::<f64>() / steps.len() as f64;
        let max = steps.iter().fold(0.0f64, |a, &b| a.max(b));
        mean_text.push_str(&format!("{f}\t{}\n", dio::format_sig(mean)));
        max_text.push_str(&format!("{f}\t{}\n", dio::format_sig(max)));
    }
    write_file(&args.output, "displacement_mean.txt", mean_text.as_bytes())?;
    write_file(&args.output, "displacement_max.txt", max_text.as_bytes())?;

    // member-to-centroid deviation histogram: 100 bins to 2*d_th + overflow
    let positions: BTreeMap<PedestrianId, BTreeMap<FrameIndex, Point2<f64>>> = series
        .tracks()
        .into_iter()
        .map(|(id, t)| (id, t.into_iter().collect()))
        .collect();
    let mut replay = MembershipReplay::new(&events);
    let bin_width = cfg.d_th / 50.0;
    let n_bins = 100usize;
    let mut bins = vec![0usize; n_bins];
    let mut overflow = 0usize;
    let mut samples_by_frame: BTreeMap<FrameIndex, Vec<(usize, usize)>> = BTreeMap::new();
    for (ti, track) in tracks.iter().enumerate() {
        for (si, s) in track.samples.iter().enumerate() {
            samples_by_frame.entry(s.frame).or_default().push((ti, si));
        }
    }
    for (&frame, entries) in &samples_by_frame {
        let membership = replay.advance_to(frame).clone();
        for &(ti, si) in entries {
            let track = &tracks[ti];
            let c = track.samples[si].point();
            for (ped, cid) in &membership {
                if *cid != track.cluster_id {
                    continue;
                }
                let Some(p) = positions.get(ped).and_then(|t| t.get(&frame)) else {
                    continue;
                };
                let d = euclidean_distance(*p, c);
                let bin = (d / bin_width).floor() as usize;
                if bin < n_bins {
                    bins[bin] += 1;
                } else {
                    overflow += 1;
                }
            }
        }
    }
    let mut hist = String::from("bin_upper_px\tcount\n");
    for (i, count) in bins.iter().enumerate() {
        hist.push_str(&format!(
            "{}\t{count}\n",
            dio::format_sig(bin_width * (i + 1) as f64)
        ));
    }
    hist.push_str(&format!("inf\t{overflow}\n"));
    write_file(&args.output, "deviation_hist.txt", hist.as_bytes())?;

    // consolidated human-readable summary
    let report = build_report(&cfg, &series, &tracks, &events)?;
    let summary = dio::write_report(&report);
    write_file(&args.output, "report.txt", summary.as_bytes())?;
    print!("{summary}");
    Ok(())
}
