use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::maxmatch::{extract_system_edits, MaxMatchConfig};
use super::{Counts, Edit, EditAnnotation, MetricReport};
use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::textio;

/// One source sentence with gold edits grouped by annotator. An annotator
/// with an empty list judged the sentence correct.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct M2Sentence {
    pub source: Sentence,
    pub annotators: BTreeMap<usize, Vec<EditAnnotation>>,
}

impl M2Sentence {
    /// Gold edits of one annotator, without type labels.
    pub fn gold(&self, annotator: usize) -> Vec<Edit> {
        self.annotators
            .get(&annotator)
            .map(|v| v.iter().map(|a| a.edit.clone()).collect())
            .unwrap_or_default()
    }

    /// Annotator ids; a sentence without any `A` line has annotator 0 with
    /// no edits.
    pub fn annotator_ids(&self) -> Vec<usize> {
        if self.annotators.is_empty() {
            vec![0]
        } else {
            self.annotators.keys().copied().collect()
        }
    }

    /// The source with the first annotator's edits applied.
    pub fn corrected(&self) -> Sentence {
        let id = self.annotator_ids()[0];
        Sentence::from_line(&super::apply_edits(self.source.tokens(), &self.gold(id)).join(" "))
    }

    /// The first annotator's correction as source, with edits that restore
    /// the original sentence.
    pub fn reversed(&self) -> M2Sentence {
        let id = self.annotator_ids()[0];
        let mut anns: Vec<&EditAnnotation> = self.annotators.get(&id).map(|v| v.iter().collect()).unwrap_or_default();
        anns.sort_by(|a, b| a.edit.cmp(&b.edit));
        let src = self.source.tokens();
        let mut shift = 0isize;
        let mut out = Vec::with_capacity(anns.len());
        for a in anns {
            let e = &a.edit;
            let start = (e.start as isize + shift) as usize;
            out.push(EditAnnotation {
                edit: Edit {
                    start,
                    end: start + e.replacement.len(),
                    replacement: src[e.start..e.end].to_vec(),
                },
                kind: a.kind.clone(),
                annotator: 0,
            });
            shift += e.replacement.len() as isize - (e.end - e.start) as isize;
        }
        M2Sentence {
            source: self.corrected(),
            annotators: BTreeMap::from([(0, out)]),
        }
    }
}

const FMT: &str = "M2";

/// Splits an edit line into its six fields. Span and type are taken from
/// the left and the last three fields from the right, so a replacement
/// token may itself contain `|`.
fn edit_fields(rest: &str) -> Option<[&str; 6]> {
    let (span, rest) = rest.split_once("|||")?;
    let (kind, rest) = rest.split_once("|||")?;
    let (rest, annotator) = rest.rsplit_once("|||")?;
    let (rest, none) = rest.rsplit_once("|||")?;
    let (replacement, required) = rest.rsplit_once("|||")?;
    Some([span, kind, replacement, required, none, annotator])
}

pub fn read_m2<R: BufRead>(r: R) -> Result<Vec<M2Sentence>> {
    let mut out = Vec::new();
    let mut cur: Option<M2Sentence> = None;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            out.extend(cur.take());
            continue;
        }
        if let Some(rest) = line.strip_prefix("S ").or(if line == "S" { Some("") } else { None }) {
            out.extend(cur.take());
            cur = Some(M2Sentence {
                source: Sentence::from_line(rest),
                annotators: BTreeMap::new(),
            });
        } else if let Some(rest) = line.strip_prefix("A ") {
            let s = cur
                .as_mut()
                .ok_or_else(|| Error::parse(FMT, lineno, "edit line before any S line"))?;
            let fields = edit_fields(rest).ok_or_else(|| Error::parse(FMT, lineno, "expected 6 `|||`-separated fields"))?;
            let mut span = fields[0].split_whitespace();
            let (a, b) = (span.next(), span.next());
            if span.next().is_some() {
                return Err(Error::parse(FMT, lineno, "bad span"));
            }
            let (Some(a), Some(b)) = (a, b) else {
                return Err(Error::parse(FMT, lineno, "bad span"));
            };
            let annotator: usize = fields[5]
                .trim()
                .parse()
                .map_err(|_| Error::parse(FMT, lineno, "bad annotator id"))?;
            let list = s.annotators.entry(annotator).or_default();
            if a == "-1" && b == "-1" {
                continue;
            }
            let start: usize = a.parse().map_err(|_| Error::parse(FMT, lineno, "bad span start"))?;
            let end: usize = b.parse().map_err(|_| Error::parse(FMT, lineno, "bad span end"))?;
            if start > end || end > s.source.len() {
                return Err(Error::parse(FMT, lineno, "span outside the source"));
            }
            let repl = fields[2].trim();
            let replacement = if repl == "-NONE-" {
                Vec::new()
            } else {
                repl.split_whitespace().map(str::to_owned).collect()
            };
            let edit = Edit {
                start,
                end,
                replacement,
            };
            if edit.is_noop(s.source.tokens()) {
                continue;
            }
            list.push(EditAnnotation {
                edit,
                kind: fields[1].to_owned(),
                annotator,
            });
        } else {
            return Err(Error::parse(FMT, lineno, "expected an S or A line"));
        }
    }
    out.extend(cur);
    Ok(out)
}

pub fn write_m2<W: Write>(mut w: W, sentences: &[M2Sentence]) -> std::io::Result<()> {
    for s in sentences {
        writeln!(w, "S {}", s.source)?;
        for (id, edits) in &s.annotators {
            if edits.is_empty() {
                writeln!(w, "A -1 -1|||noop|||-NONE-|||REQUIRED|||-NONE-|||{id}")?;
            }
            for a in edits {
                writeln!(
                    w,
                    "A {} {}|||{}|||{}|||REQUIRED|||-NONE-|||{}",
                    a.edit.start,
                    a.edit.end,
                    a.kind,
                    a.edit.replacement.join(" "),
                    id
                )?;
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_m2_path(path: &Path) -> Result<Vec<M2Sentence>> {
    read_m2(textio::open_read(path)?)
}

pub fn write_m2_path(path: &Path, sentences: &[M2Sentence]) -> Result<()> {
    textio::write_atomic(path, |w| write_m2(w, sentences))
}

fn counts_for(system: &[Edit], gold: &[Edit]) -> Counts {
    let gold: HashSet<&Edit> = gold.iter().collect();
    let sys: HashSet<&Edit> = system.iter().collect();
    let tp = sys.iter().filter(|e| gold.contains(*e)).count() as u64;
    Counts {
        tp,
        fp: sys.len() as u64 - tp,
        fn_: gold.len() as u64 - tp,
    }
}

struct Candidate {
    annotator: usize,
    edits: Vec<Edit>,
    counts: Counts,
}

fn candidates(s: &M2Sentence, hyp: &Sentence, cfg: &MaxMatchConfig) -> Vec<Candidate> {
    s.annotator_ids()
        .into_iter()
        .map(|id| {
            let gold = s.gold(id);
            let edits = extract_system_edits(s.source.tokens(), hyp.tokens(), &gold, cfg);
            let counts = counts_for(&edits, &gold);
            Candidate {
                annotator: id,
                edits,
                counts,
            }
        })
        .collect()
}

/// Counts of one sentence against the annotator giving the best
/// sentence-level F0.5 (ties: more true positives, then the lowest id).
/// These are additive, so corpus statistics for tuning are their sum.
pub fn sentence_m2_counts(s: &M2Sentence, hyp: &Sentence, cfg: &MaxMatchConfig) -> Counts {
    pick(candidates(s, hyp, cfg), Counts::default()).counts
}

fn pick(cands: Vec<Candidate>, running: Counts) -> Candidate {
    let mut best: Option<(f64, Candidate)> = None;
    for c in cands {
        let f = (running + c.counts).f05();
        let better = match &best {
            None => true,
            Some((bf, b)) => f > *bf || (f == *bf && c.counts.tp > b.counts.tp),
        };
        if better {
            best = Some((f, c));
        }
    }
    best.expect("at least one annotator").1
}

/// Per-sentence detail of an M² evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct M2Scored {
    pub annotator: usize,
    pub system_edits: Vec<Edit>,
    pub counts: Counts,
}

/// Corpus M²: for each sentence the annotator maximizing F0.5 of the
/// running corpus counts is chosen, and the report is computed from the
/// totals.
pub fn m2_score(
    gold: &[M2Sentence],
    hypotheses: &[Sentence],
    cfg: &MaxMatchConfig,
) -> Result<(MetricReport, Vec<M2Scored>)> {
    if gold.len() != hypotheses.len() {
        return Err(Error::Mismatch(format!(
            "{} gold sentences but {} hypotheses",
            gold.len(),
            hypotheses.len()
        )));
    }
    let all: Vec<Vec<Candidate>> = gold
        .par_iter()
        .zip(hypotheses.par_iter())
        .map(|(s, h)| candidates(s, h, cfg))
        .collect();
    let mut total = Counts::default();
    let mut detail = Vec::with_capacity(all.len());
    for cands in all {
        let c = pick(cands, total);
        total += c.counts;
        detail.push(M2Scored {
            annotator: c.annotator,
            system_edits: c.edits,
            counts: c.counts,
        });
    }
    Ok((MetricReport::from_counts(total), detail))
}

/// Per-error-type counts.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TypeReport {
    pub by_type: BTreeMap<String, Counts>,
}

impl TypeReport {
    pub fn f05(&self, kind: &str) -> Option<f64> {
        self.by_type.get(kind).map(Counts::f05)
    }
}

fn overlaps(a: &Edit, b: &Edit) -> bool {
    if a.start == a.end || b.start == b.end {
        a.start.max(b.start) <= a.end.min(b.end)
    } else {
        a.start < b.end && b.start < a.end
    }
}

/// Breaks counts down by gold error type. True positives and false
/// negatives take the gold type; a false positive takes the type of the
/// overlapping gold edit with the nearest start, else `OTHER`.
pub fn per_type_report(gold: &[M2Sentence], scored: &[M2Scored]) -> TypeReport {
    let mut rep = TypeReport::default();
    for (s, sc) in gold.iter().zip(scored) {
        let annotations = s.annotators.get(&sc.annotator).map(Vec::as_slice).unwrap_or(&[]);
        let sys: HashSet<&Edit> = sc.system_edits.iter().collect();
        let mut seen_gold = HashSet::new();
        for a in annotations {
            if !seen_gold.insert(&a.edit) {
                continue;
            }
            let c = rep.by_type.entry(a.kind.clone()).or_default();
            if sys.contains(&a.edit) {
                c.tp += 1;
            } else {
                c.fn_ += 1;
            }
        }
        let mut seen_sys = HashSet::new();
        for e in &sc.system_edits {
            if !seen_sys.insert(e) || seen_gold.contains(e) {
                continue;
            }
            let kind = annotations
                .iter()
                .filter(|a| overlaps(&a.edit, e))
                .min_by_key(|a| a.edit.start.abs_diff(e.start))
                .map_or("OTHER", |a| a.kind.as_str());
            rep.by_type.entry(kind.to_owned()).or_default().fp += 1;
        }
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "S He go to school .\nA 1 2|||R:VERB:SVA|||goes|||REQUIRED|||-NONE-|||0\nA 1 2|||R:VERB:TENSE|||went|||REQUIRED|||-NONE-|||1\n\nS Fine .\nA -1 -1|||noop|||-NONE-|||REQUIRED|||-NONE-|||0\n\nS a the b\nA 1 2|||U:DET||||||REQUIRED|||-NONE-|||0\n\n";

    #[test]
    fn m2_file_round_trip_is_exact() {
        let parsed = read_m2(SAMPLE.as_bytes()).unwrap();
        assert_eq!(parsed.len(), 3);
        assert_eq!(parsed[0].gold(1), vec![Edit::new(1, 2, &["went"])]);
        assert_eq!(parsed[1].annotators[&0], vec![]);
        assert_eq!(parsed[2].gold(0), vec![Edit::new(1, 2, &[])]);
        let mut buf = Vec::new();
        write_m2(&mut buf, &parsed).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), SAMPLE);
    }

    #[test]
    fn replacement_tokens_may_contain_pipes() {
        let text = "S a b\nA 0 1|||R:OTHER|||x| |y|||REQUIRED|||-NONE-|||0\n\n";
        let parsed = read_m2(text.as_bytes()).unwrap();
        assert_eq!(parsed[0].gold(0), vec![Edit::new(0, 1, &["x|", "|y"])]);
        let mut buf = Vec::new();
        write_m2(&mut buf, &parsed).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), text);
    }

    #[test]
    fn m2_parse_errors() {
        assert!(read_m2("A 1 2|||x|||y|||REQUIRED|||-NONE-|||0\n".as_bytes()).is_err());
        assert!(read_m2("S a\nA 0 5|||x|||y|||REQUIRED|||-NONE-|||0\n".as_bytes()).is_err());
        assert!(read_m2("S a\nA 0 1|||x|||y\n".as_bytes()).is_err());
    }

    #[test]
    fn annotator_choice_maximizes_f() {
        let gold = read_m2(SAMPLE.as_bytes()).unwrap();
        let hyps: Vec<Sentence> = ["He went to school .", "Fine .", "a b"].iter().map(|s| Sentence::from_line(s)).collect();
        let (rep, detail) = m2_score(&gold, &hyps, &MaxMatchConfig::default()).unwrap();
        assert_eq!(detail[0].annotator, 1);
        assert_eq!((rep.tp, rep.fp, rep.fn_), (2, 0, 0));
        assert_eq!(rep.f05, 1.0);
        assert!(m2_score(&gold, &hyps[..2], &MaxMatchConfig::default()).is_err());
    }

    #[test]
    fn per_type_attribution() {
        let gold = read_m2(SAMPLE.as_bytes()).unwrap();
        // wrong verb form at the gold site, and an unannotated change
        let hyps: Vec<Sentence> = ["He goes to school .", "Good .", "a the b"].iter().map(|s| Sentence::from_line(s)).collect();
        let (rep, detail) = m2_score(&gold, &hyps, &MaxMatchConfig::default()).unwrap();
        let types = per_type_report(&gold, &detail);
        let total = types.by_type.values().fold(Counts::default(), |a, &c| a + c);
        assert_eq!(total, rep.counts());
        assert_eq!(types.by_type["R:VERB:SVA"], Counts { tp: 1, fp: 0, fn_: 0 });
        assert_eq!(types.by_type["OTHER"], Counts { tp: 0, fp: 1, fn_: 0 });
        assert_eq!(types.by_type["U:DET"], Counts { tp: 0, fp: 0, fn_: 1 });
    }

    #[test]
    fn reversed_edits_restore_the_source() {
        let gold = read_m2("S a b c d\nA 0 1|||X||||||REQUIRED|||-NONE-|||0\nA 2 3|||Y|||x y|||REQUIRED|||-NONE-|||0\n\n".as_bytes()).unwrap();
        let rev = gold[0].reversed();
        assert_eq!(rev.source.to_string(), "b x y d");
        assert_eq!(rev.gold(0), vec![Edit::new(0, 0, &["a"]), Edit::new(1, 3, &["c"])]);
        assert_eq!(rev.corrected(), gold[0].source);
    }
}
