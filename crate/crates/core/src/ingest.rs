//! Readers and writers for the on-disk formats.
//!
//! Inputs are tab-separated UTF-8 with Unix or DOS line endings:
//!
//! * a VCF subset (GT, optionally DS) for genotypes,
//! * a weights TSV `variant_id effect_allele other_allele weight`,
//! * a panel list with one variant id per line,
//! * a phenotype TSV `sample_id population sex bmi`.
//!
//! Reports go out as CSV. Every parser reads its input once, line by line.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::evaluation::{CohortReport, ReportRow};
use crate::genotype::{
    is_acgt_run, positional_key, GenotypeError, GenotypeMatrix, PanelDefinition,
    SampleRecord, ScoreWeightTable, Sex, Variant, WeightRow,
};
use crate::numfmt;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line_no}: malformed row ({reason}): {line}")]
    MalformedRow {
        line_no: usize,
        reason: String,
        line: String,
    },
    #[error("VCF header line (#CHROM ...) missing or invalid: {0}")]
    ParseAbort(String),
    #[error("missing or unexpected header; expected `{expected}`")]
    MissingHeader { expected: String },
    #[error("duplicate variant `{0}`")]
    DuplicateVariant(String),
    #[error("line {0}: weight is not a finite number")]
    NonNumericWeight(usize),
    #[error("panel contains no variant ids")]
    EmptyPanel,
    #[error("line {line_no}: unknown sex token `{token}`")]
    UnknownSexToken { line_no: usize, token: String },
    #[error("line {line_no}: negative BMI {value}")]
    NegativeBmi { line_no: usize, value: f64 },
    #[error("duplicate sample `{0}`")]
    DuplicateSample(String),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Genotype(#[from] GenotypeError),
}

pub type Result<T, E = IngestError> = std::result::Result<T, E>;

const VCF_FIXED_COLUMNS: [&str; 9] = [
    "#CHROM", "POS", "ID", "REF", "ALT", "QUAL", "FILTER", "INFO", "FORMAT",
];

/// Why a VCF data row did not become a matrix column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SkipReason {
    MultiAllelic,
    NoAltAllele,
    NonAcgtAllele,
    DuplicateVariant,
}

impl SkipReason {
    pub fn as_str(self) -> &'static str {
        match self {
            SkipReason::MultiAllelic => "multi_allelic",
            SkipReason::NoAltAllele => "no_alt_allele",
            SkipReason::NonAcgtAllele => "non_acgt_allele",
            SkipReason::DuplicateVariant => "duplicate_variant",
        }
    }
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedRow {
    pub line_no: usize,
    pub reason: SkipReason,
}

/// Row accounting: `rows_parsed + skipped.len() == data_rows`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParseReport {
    pub data_rows: usize,
    pub rows_parsed: usize,
    pub skipped: Vec<SkippedRow>,
}

impl ParseReport {
    /// `(reason, count)` in a fixed order.
    pub fn counts(&self) -> Vec<(SkipReason, usize)> {
        let mut counts = std::collections::BTreeMap::new();
        for s in &self.skipped {
            *counts.entry(s.reason).or_insert(0) += 1;
        }
        counts.into_iter().collect()
    }
}

#[derive(Debug, Clone)]
pub struct VcfData {
    pub meta_lines: Vec<String>,
    pub matrix: GenotypeMatrix,
    pub report: ParseReport,
}

fn malformed(line_no: usize, reason: impl Into<String>, line: &str) -> IngestError {
    IngestError::MalformedRow {
        line_no,
        reason: reason.into(),
        line: line.to_string(),
    }
}

fn gt_dosage(gt: &str) -> Option<Option<f64>> {
    Some(match gt {
        "0/0" | "0|0" => Some(0.0),
        "0/1" | "1/0" | "0|1" | "1|0" => Some(1.0),
        "1/1" | "1|1" => Some(2.0),
        "./." | ".|." => None,
        _ => return None,
    })
}

/// Reads the VCF subset into an ALT-dosage matrix.
///
/// GT is counted unless FORMAT declares DS, in which case a present DS value
/// wins. Multi-allelic, ALT-less, symbolic, and duplicate-ID rows are skipped
/// and itemized in the returned [`ParseReport`].
pub fn parse_vcf<R: BufRead>(reader: R) -> Result<VcfData> {
    let mut meta_lines = Vec::new();
    let mut sample_ids: Option<Vec<String>> = None;
    let mut variants = Vec::new();
    let mut seen_ids = HashSet::new();
    let mut dosage = Vec::new();
    let mut missing = Vec::new();
    let mut report = ParseReport::default();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let raw = line?;
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix("##") {
            if sample_ids.is_some() {
                return Err(malformed(line_no, "meta line after header", line));
            }
            meta_lines.push(format!("##{meta}"));
            continue;
        }
        if line.starts_with('#') {
            if sample_ids.is_some() {
                return Err(malformed(line_no, "second header line", line));
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() < 10 || cols[..9] != VCF_FIXED_COLUMNS {
                return Err(IngestError::ParseAbort(format!(
                    "line {line_no}: expected {} followed by at least one sample",
                    VCF_FIXED_COLUMNS.join(" ")
                )));
            }
            let mut uniq = HashSet::new();
            for s in &cols[9..] {
                if s.is_empty() || !uniq.insert(*s) {
                    return Err(IngestError::DuplicateSample(s.to_string()));
                }
            }
            sample_ids = Some(cols[9..].iter().map(|s| s.to_string()).collect());
            continue;
        }
        let Some(samples) = sample_ids.as_ref() else {
            return Err(IngestError::ParseAbort(format!(
                "line {line_no}: data row before #CHROM header"
            )));
        };
        report.data_rows += 1;
        let n = samples.len();
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 9 + n {
            return Err(malformed(
                line_no,
                format!("expected {} columns, found {}", 9 + n, cols.len()),
                line,
            ));
        }
        let pos: u64 = cols[1]
            .parse()
            .ok()
            .filter(|&p| p >= 1)
            .ok_or_else(|| malformed(line_no, "POS is not a positive integer", line))?;
        let reference = cols[3].to_ascii_uppercase();
        let alt = cols[4].to_ascii_uppercase();
        let format: Vec<&str> = cols[8].split(':').collect();
        if format.first() != Some(&"GT") {
            return Err(malformed(line_no, "FORMAT must begin with GT", line));
        }
        let ds_index = format.iter().position(|f| *f == "DS");

        let skip = if alt.contains(',') {
            Some(SkipReason::MultiAllelic)
        } else if alt == "." {
            Some(SkipReason::NoAltAllele)
        } else if !is_acgt_run(&reference) || !is_acgt_run(&alt) || reference == alt {
            Some(SkipReason::NonAcgtAllele)
        } else {
            None
        };
        let id = match cols[2] {
            "." | "" => positional_key(cols[0], pos, &reference, &alt),
            other => other.to_string(),
        };
        let skip = skip.or_else(|| (!seen_ids.insert(id.clone())).then_some(SkipReason::DuplicateVariant));
        if let Some(reason) = skip {
            report.skipped.push(SkippedRow { line_no, reason });
            continue;
        }

        for entry in &cols[9..] {
            let fields: Vec<&str> = entry.split(':').collect();
            let gt = gt_dosage(fields[0])
                .ok_or_else(|| malformed(line_no, format!("unsupported GT `{}`", fields[0]), line))?;
            let ds = match ds_index.and_then(|i| fields.get(i)) {
                None | Some(&".") | Some(&"") => None,
                Some(text) => {
                    let v: f64 = text
                        .parse()
                        .ok()
                        .filter(|v: &f64| (0.0..=2.0).contains(v))
                        .ok_or_else(|| malformed(line_no, format!("invalid DS `{text}`"), line))?;
                    Some(v)
                }
            };
            match ds.or(gt) {
                Some(d) => {
                    dosage.push(d);
                    missing.push(false);
                }
                None => {
                    dosage.push(0.0);
                    missing.push(true);
                }
            }
        }
        variants.push(Variant::new(id, cols[0], pos, reference, alt)?);
        report.rows_parsed += 1;
    }

    let samples = sample_ids.ok_or_else(|| IngestError::ParseAbort("no #CHROM header".into()))?;
    let n = samples.len();
    let m = variants.len();
    let matrix = GenotypeMatrix::new(
        samples.into_iter().map(SampleRecord::new).collect(),
        variants,
        DMatrix::from_vec(n, m, dosage),
        DMatrix::from_vec(n, m, missing),
    )?;
    Ok(VcfData {
        meta_lines,
        matrix,
        report,
    })
}

/// Minimal VCF writer. Rows with any fractional dosage are written as
/// `GT:DS` with 17-digit DS values so they read back unchanged.
pub fn write_vcf<W: Write>(matrix: &GenotypeMatrix, source: &str, mut out: W) -> Result<()> {
    writeln!(out, "##fileformat=VCFv4.2")?;
    writeln!(out, "##source={source}")?;
    writeln!(
        out,
        "##FORMAT=<ID=GT,Number=1,Type=String,Description=\"Genotype\">"
    )?;
    writeln!(
        out,
        "##FORMAT=<ID=DS,Number=1,Type=Float,Description=\"ALT dosage\">"
    )?;
    write!(out, "{}", VCF_FIXED_COLUMNS.join("\t"))?;
    for s in matrix.samples() {
        write!(out, "\t{}", s.sample_id)?;
    }
    writeln!(out)?;
    for (j, v) in matrix.variants().iter().enumerate() {
        let hard = (0..matrix.n_samples()).all(|i| match matrix.get(i, j) {
            Some(d) => d == 0.0 || d == 1.0 || d == 2.0,
            None => true,
        });
        write!(
            out,
            "{}\t{}\t{}\t{}\t{}\t.\tPASS\t.\t{}",
            v.chromosome,
            v.position,
            v.id,
            v.ref_allele,
            v.alt_allele,
            if hard { "GT" } else { "GT:DS" }
        )?;
        for i in 0..matrix.n_samples() {
            let d = matrix.get(i, j);
            let gt = match d {
                None => "./.",
                Some(x) if x < 0.5 => "0/0",
                Some(x) if x < 1.5 => "0/1",
                Some(_) => "1/1",
            };
            if hard {
                write!(out, "\t{gt}")?;
            } else {
                match d {
                    Some(x) => write!(out, "\t{gt}:{}", numfmt::exact(x))?,
                    None => write!(out, "\t{gt}:.")?,
                }
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

fn split_tsv(line: &str) -> Vec<&str> {
    line.split('\t').map(str::trim).collect()
}

fn expect_header<R: BufRead>(
    lines: &mut std::iter::Enumerate<std::io::Lines<R>>,
    expected: &[&str],
) -> Result<()> {
    for (_, line) in lines.by_ref() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if split_tsv(line) == expected {
            return Ok(());
        }
        break;
    }
    Err(IngestError::MissingHeader {
        expected: expected.join("\t"),
    })
}

pub const WEIGHTS_HEADER: [&str; 4] = ["variant_id", "effect_allele", "other_allele", "weight"];

/// Reads a weights TSV; `other_allele` may be `.`.
pub fn parse_weights<R: BufRead>(reader: R) -> Result<ScoreWeightTable> {
    let mut lines = reader.lines().enumerate();
    expect_header(&mut lines, &WEIGHTS_HEADER)?;
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cols = split_tsv(line);
        if cols.len() != 4 {
            return Err(malformed(line_no, "expected 4 tab-separated columns", line));
        }
        let weight: f64 = cols[3]
            .parse()
            .ok()
            .filter(|w: &f64| w.is_finite())
            .ok_or(IngestError::NonNumericWeight(line_no))?;
        if !seen.insert(cols[0].to_string()) {
            return Err(IngestError::DuplicateVariant(cols[0].to_string()));
        }
        let effect = cols[1].to_ascii_uppercase();
        if !is_acgt_run(&effect) {
            return Err(malformed(line_no, "effect allele must be A/C/G/T", line));
        }
        let other = match cols[2] {
            "." | "" => None,
            a => Some(a.to_ascii_uppercase()),
        };
        rows.push(WeightRow {
            variant_id: cols[0].to_string(),
            effect_allele: effect,
            other_allele: other,
            weight,
        });
    }
    Ok(ScoreWeightTable::new(rows)?)
}

pub fn write_weights<W: Write>(table: &ScoreWeightTable, mut out: W) -> Result<()> {
    writeln!(out, "{}", WEIGHTS_HEADER.join("\t"))?;
    for r in table.rows() {
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            r.variant_id,
            r.effect_allele,
            r.other_allele.as_deref().unwrap_or("."),
            numfmt::exact(r.weight)
        )?;
    }
    Ok(())
}

/// Reads a panel list. Blank lines and `#` comments are ignored; repeated ids
/// keep their first position.
pub fn parse_panel<R: BufRead>(reader: R, name: &str) -> Result<PanelDefinition> {
    let mut ids = Vec::new();
    let mut seen = HashSet::new();
    let mut duplicates = 0usize;
    for line in reader.lines() {
        let line = line?;
        let id = line.trim();
        if id.is_empty() || id.starts_with('#') {
            continue;
        }
        if seen.insert(id.to_string()) {
            ids.push(id.to_string());
        } else {
            duplicates += 1;
        }
    }
    if duplicates > 0 {
        log::warn!("panel `{name}`: {duplicates} duplicate id(s) ignored");
    }
    if ids.is_empty() {
        return Err(IngestError::EmptyPanel);
    }
    Ok(PanelDefinition::new(name, ids)?)
}

pub fn write_panel<W: Write>(panel: &PanelDefinition, mut out: W) -> Result<()> {
    writeln!(out, "# {}", panel.name())?;
    for id in panel.variant_ids() {
        writeln!(out, "{id}")?;
    }
    Ok(())
}

pub const PHENOTYPE_HEADER: [&str; 4] = ["sample_id", "population", "sex", "bmi"];

fn parse_sex(token: &str, line_no: usize) -> Result<Option<Sex>> {
    Ok(Some(match token.to_ascii_lowercase().as_str() {
        "." => return Ok(None),
        "male" | "m" => Sex::Male,
        "female" | "f" => Sex::Female,
        "unknown" | "u" => Sex::Unknown,
        _ => {
            return Err(IngestError::UnknownSexToken {
                line_no,
                token: token.to_string(),
            })
        }
    }))
}

/// Reads sample phenotypes. `obese` is derived as BMI > 27 when BMI is present.
pub fn parse_phenotypes<R: BufRead>(reader: R) -> Result<Vec<SampleRecord>> {
    let mut lines = reader.lines().enumerate();
    expect_header(&mut lines, &PHENOTYPE_HEADER)?;
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cols = split_tsv(line);
        if cols.len() != 4 {
            return Err(malformed(line_no, "expected 4 tab-separated columns", line));
        }
        if cols[0].is_empty() || cols[0] == "." {
            return Err(malformed(line_no, "empty sample id", line));
        }
        if !seen.insert(cols[0].to_string()) {
            return Err(IngestError::DuplicateSample(cols[0].to_string()));
        }
        let mut record = SampleRecord::new(cols[0]);
        if cols[1] != "." && !cols[1].is_empty() {
            record.population = Some(cols[1].to_string());
        }
        record.sex = parse_sex(cols[2], line_no)?;
        if cols[3] != "." && !cols[3].is_empty() {
            let bmi: f64 = cols[3]
                .parse()
                .ok()
                .filter(|b: &f64| b.is_finite())
                .ok_or_else(|| malformed(line_no, "BMI is not a number", line))?;
            if bmi < 0.0 {
                return Err(IngestError::NegativeBmi {
                    line_no,
                    value: bmi,
                });
            }
            record = record.with_bmi(bmi);
        }
        records.push(record);
    }
    Ok(records)
}

pub fn write_phenotypes<W: Write>(records: &[SampleRecord], mut out: W) -> Result<()> {
    writeln!(out, "{}", PHENOTYPE_HEADER.join("\t"))?;
    for r in records {
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            r.sample_id,
            r.population.as_deref().unwrap_or("."),
            r.sex.map_or(".", Sex::as_str),
            r.bmi.map_or_else(|| ".".to_string(), |b| numfmt::significant(b, 10)),
        )?;
    }
    Ok(())
}

/// Digits used for reals in report CSVs.
pub const REPORT_DIGITS: usize = 10;

fn fmt_real(x: f64) -> String {
    numfmt::significant(x, REPORT_DIGITS)
}

fn fmt_flag(x: Option<bool>) -> &'static str {
    match x {
        Some(true) => "1",
        Some(false) => "0",
        None => ".",
    }
}

pub fn report_header(k: usize) -> Vec<String> {
    let mut header = vec!["sample_id".to_string(), "population".to_string()];
    header.extend((1..=k).map(|i| format!("pc{i}")));
    header.extend(["raw_prs", "adjusted_prs", "obese"].map(String::from));
    header
}

/// Writes `sample_id,population,pc1..pck,raw_prs,adjusted_prs,obese` in row order.
pub fn write_report_csv<W: Write>(report: &CohortReport, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(report_header(report.k()))?;
    for row in report.rows() {
        let mut record = vec![
            row.sample_id.clone(),
            row.population.clone().unwrap_or_else(|| ".".into()),
        ];
        record.extend(row.pcs.iter().map(|&x| fmt_real(x)));
        record.push(fmt_real(row.raw_prs));
        record.push(fmt_real(row.adjusted_prs));
        record.push(fmt_flag(row.obese).to_string());
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_report_csv<R: std::io::Read>(input: R) -> Result<CohortReport> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    let k = header.len().saturating_sub(5);
    if header.len() < 5 || header != report_header(k) {
        return Err(IngestError::MissingHeader {
            expected: report_header(4).join(","),
        });
    }
    let mut rows = Vec::new();
    for (idx, record) in r.records().enumerate() {
        let record = record?;
        let line_no = idx + 2;
        let real = |i: usize| -> Result<f64> {
            record[i]
                .parse()
                .map_err(|_| malformed(line_no, format!("column {} is not a number", header[i]), &record[i]))
        };
        let pcs = (0..k).map(|c| real(2 + c)).collect::<Result<Vec<_>>>()?;
        let obese = match &record[k + 4] {
            "1" => Some(true),
            "0" => Some(false),
            "." => None,
            other => return Err(malformed(line_no, "obese must be 1, 0 or .", other)),
        };
        rows.push(ReportRow {
            sample_id: record[0].to_string(),
            population: (&record[1] != ".").then(|| record[1].to_string()),
            pcs,
            raw_prs: real(k + 2)?,
            adjusted_prs: real(k + 3)?,
            obese,
        });
    }
    Ok(CohortReport::new(k, rows))
}

/// `reason,count` summary of skipped rows.
pub fn write_parse_report_csv<W: Write>(report: &ParseReport, mut out: W) -> Result<()> {
    writeln!(out, "reason,count")?;
    writeln!(out, "parsed,{}", report.rows_parsed)?;
    for (reason, count) in report.counts() {
        writeln!(out, "{reason},{count}")?;
    }
    Ok(())
}

/// One `line,reason` row per skipped data row.
pub fn write_parse_detail_csv<W: Write>(report: &ParseReport, mut out: W) -> Result<()> {
    writeln!(out, "line,reason")?;
    for s in &report.skipped {
        writeln!(out, "{},{}", s.line_no, s.reason)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gt_tokens() {
        assert_eq!(gt_dosage("0/1"), Some(Some(1.0)));
        assert_eq!(gt_dosage("1|1"), Some(Some(2.0)));
        assert_eq!(gt_dosage("./."), Some(None));
        assert_eq!(gt_dosage("0/2"), None);
        assert_eq!(gt_dosage("1"), None);
    }

    const HEADER: &str = "#CHROM\tPOS\tID\tREF\tALT\tQUAL\tFILTER\tINFO\tFORMAT\tS1";

    #[test]
    fn vcf_skips_are_itemized() {
        let text = format!(
            "##fileformat=VCFv4.2\n{HEADER}\n\
             1\t1\trs1\tA\tG\t.\t.\t.\tGT\t0/1\n\
             1\t2\trs2\tA\tG,T\t.\t.\t.\tGT\t0/1\n\
             1\t3\trs3\tA\t.\t.\t.\t.\tGT\t0/0\n\
             1\t4\trs4\tA\t<DEL>\t.\t.\t.\tGT\t0/1\n\
             1\t5\trs1\tC\tT\t.\t.\t.\tGT\t0/1\n"
        );
        let vcf = parse_vcf(text.as_bytes()).unwrap();
        assert_eq!(vcf.report.data_rows, 5);
        assert_eq!(vcf.report.rows_parsed, 1);
        let reasons: Vec<_> = vcf.report.skipped.iter().map(|s| (s.line_no, s.reason)).collect();
        assert_eq!(
            reasons,
            [
                (4, SkipReason::MultiAllelic),
                (5, SkipReason::NoAltAllele),
                (6, SkipReason::NonAcgtAllele),
                (7, SkipReason::DuplicateVariant)
            ]
        );
        assert_eq!(vcf.meta_lines, ["##fileformat=VCFv4.2"]);
    }

    #[test]
    fn vcf_errors() {
        assert!(matches!(
            parse_vcf("1\t1\trs1\tA\tG\t.\t.\t.\tGT\t0/1\n".as_bytes()),
            Err(IngestError::ParseAbort(_))
        ));
        assert!(matches!(parse_vcf("##only\n".as_bytes()), Err(IngestError::ParseAbort(_))));
        let short = format!("{HEADER}\n1\t1\trs1\tA\tG\t.\t.\t.\tGT\n");
        assert!(matches!(
            parse_vcf(short.as_bytes()),
            Err(IngestError::MalformedRow { line_no: 2, .. })
        ));
        let bad_format = format!("{HEADER}\n1\t1\trs1\tA\tG\t.\t.\t.\tDS\t0.5\n");
        assert!(matches!(
            parse_vcf(bad_format.as_bytes()),
            Err(IngestError::MalformedRow { .. })
        ));
        let dup = "#CHROM\tPOS\tID\tREF\tALT\tQUAL\tFILTER\tINFO\tFORMAT\tS1\tS1\n";
        assert!(matches!(parse_vcf(dup.as_bytes()), Err(IngestError::DuplicateSample(_))));
    }

    #[test]
    fn vcf_missing_id_uses_positional_key_and_crlf() {
        let text = format!("{HEADER}\r\n7\t42\t.\ta\tc\t.\t.\t.\tGT\t1/1\r\n");
        let vcf = parse_vcf(text.as_bytes()).unwrap();
        assert_eq!(vcf.matrix.variants()[0].id, "7:42:A:C");
        assert_eq!(vcf.matrix.get(0, 0), Some(2.0));
    }

    #[test]
    fn weights_parse_and_errors() {
        let t = parse_weights("variant_id\teffect_allele\tother_allele\tweight\nrs1\tA\tG\t0.12\nrs2\tc\t.\t-1e-3\n".as_bytes()).unwrap();
        assert_eq!(
            t.rows()[0],
            WeightRow {
                variant_id: "rs1".into(),
                effect_allele: "A".into(),
                other_allele: Some("G".into()),
                weight: 0.12
            }
        );
        assert_eq!(t.rows()[1].other_allele, None);
        assert_eq!(t.rows()[1].effect_allele, "C");

        let dup = "variant_id\teffect_allele\tother_allele\tweight\nrs1\tA\tG\t0.1\nrs1\tA\tG\t0.2\n";
        assert!(matches!(parse_weights(dup.as_bytes()), Err(IngestError::DuplicateVariant(id)) if id == "rs1"));
        let nan = "variant_id\teffect_allele\tother_allele\tweight\nrs1\tA\tG\tabc\n";
        assert!(matches!(parse_weights(nan.as_bytes()), Err(IngestError::NonNumericWeight(2))));
        assert!(matches!(
            parse_weights("id\tweight\n".as_bytes()),
            Err(IngestError::MissingHeader { .. })
        ));
    }

    #[test]
    fn panel_dedup_and_empty() {
        let p = parse_panel("# ancestry\nrs2\n\nrs1\nrs2\n".as_bytes(), "aims").unwrap();
        assert_eq!(p.variant_ids(), ["rs2", "rs1"]);
        assert!(matches!(
            parse_panel("# a\n# b\n".as_bytes(), "x"),
            Err(IngestError::EmptyPanel)
        ));
    }

    #[test]
    fn large_panel_keeps_every_id() {
        let text: String = (0..16_385).map(|i| format!("rs{i}\n")).collect();
        assert_eq!(parse_panel(text.as_bytes(), "aims").unwrap().len(), 16_385);
    }

    #[test]
    fn phenotypes_strict_bmi_threshold() {
        let text = "sample_id\tpopulation\tsex\tbmi\nS1\tIDN\tfemale\t28.4\nS2\tIDN\tmale\t27.0\nS3\tEAS\t.\t.\n";
        let recs = parse_phenotypes(text.as_bytes()).unwrap();
        assert_eq!(recs[0].obese, Some(true));
        assert_eq!(recs[0].sex, Some(Sex::Female));
        assert_eq!(recs[1].obese, Some(false));
        assert_eq!(recs[2].obese, None);
        assert_eq!(recs[2].bmi, None);
        assert_eq!(recs[2].population.as_deref(), Some("EAS"));
    }

    #[test]
    fn phenotype_errors() {
        let sex = "sample_id\tpopulation\tsex\tbmi\nS1\tIDN\tdragon\t20\n";
        assert!(matches!(
            parse_phenotypes(sex.as_bytes()),
            Err(IngestError::UnknownSexToken { line_no: 2, .. })
        ));
        let neg = "sample_id\tpopulation\tsex\tbmi\nS1\tIDN\tmale\t-3\n";
        assert!(matches!(parse_phenotypes(neg.as_bytes()), Err(IngestError::NegativeBmi { .. })));
    }

    fn report(rows: Vec<ReportRow>) -> CohortReport {
        CohortReport::new(4, rows)
    }

    #[test]
    fn report_shapes() {
        let mut buf = Vec::new();
        write_report_csv(&report(vec![]), &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "sample_id,population,pc1,pc2,pc3,pc4,raw_prs,adjusted_prs,obese\n"
        );
        let row = ReportRow {
            sample_id: "S1".into(),
            population: Some("IDN".into()),
            pcs: vec![0.5, -1.0, 1.0 / 3.0, 0.0],
            raw_prs: 1.25,
            adjusted_prs: -0.125,
            obese: Some(true),
        };
        let mut buf = Vec::new();
        write_report_csv(&report(vec![row]), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(text.lines().nth(1).unwrap(), "S1,IDN,0.5,-1,0.3333333333,0,1.25,-0.125,1");
    }
}
