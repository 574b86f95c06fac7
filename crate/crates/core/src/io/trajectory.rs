//! One CSV per episode: a header naming every column, then one row per
//! decision. Floats use the shortest decimal that reads back to the same
//! value.

use std::path::Path;

use crate::pomdp::{Trajectory, TrajectoryStep};

use super::IoError;

const PRESENT: &str = "_present";
const HIDDEN: &str = "_hidden";

pub(crate) fn float(x: f64) -> String {
    format!("{x}")
}

fn header(t: &Trajectory) -> Vec<String> {
    let mut h = vec!["episode".to_string(), "t".to_string()];
    h.extend(t.observation_names.iter().cloned());
    h.extend(t.observation_names.iter().map(|n| format!("{n}{PRESENT}")));
    h.push("action".into());
    h.extend(t.action_names.iter().cloned());
    h.push("r".into());
    h.extend(t.state_names.iter().map(|n| format!("{n}{HIDDEN}")));
    h.push("terminated".into());
    h
}

pub fn write_trajectory<W: std::io::Write>(t: &Trajectory, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(t))?;
    let last = t.steps.len().saturating_sub(1);
    for (k, s) in t.steps.iter().enumerate() {
        let mut row = vec![t.episode.to_string(), float(s.time)];
        row.extend(s.observation.iter().copied().map(float));
        row.extend(s.present.iter().map(|&p| u8::from(p).to_string()));
        row.push(s.action.to_string());
        row.extend(s.action_values.iter().copied().map(float));
        row.push(float(s.reward));
        row.extend(s.state.iter().copied().map(float));
        row.push(u8::from(k == last && t.terminated).to_string());
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn persist_trajectory(t: &Trajectory, path: &Path) -> Result<(), IoError> {
    let file = std::fs::File::create(path).map_err(|e| IoError::at(path, e))?;
    write_trajectory(t, std::io::BufWriter::new(file)).map_err(|e| IoError::csv(path, e))
}

struct Layout {
    obs: usize,
    actions: usize,
    states: usize,
}

fn layout(h: &csv::StringRecord) -> Result<Layout, String> {
    let cols: Vec<&str> = h.iter().collect();
    if cols.len() < 5 || cols[0] != "episode" || cols[1] != "t" || cols.last() != Some(&"terminated") {
        return Err("not a trajectory header".into());
    }
    let action = cols.iter().position(|c| *c == "action").ok_or("missing action column")?;
    let obs = (action - 2) / 2;
    if (action - 2) % 2 != 0 || cols[2 + obs..action].iter().zip(&cols[2..2 + obs]).any(|(p, n)| *p != format!("{n}{PRESENT}")) {
        return Err("observation and presence columns do not pair up".into());
    }
    let r = action + cols[action..].iter().position(|c| *c == "r").ok_or("missing r column")?;
    let states = cols.len() - 1 - (r + 1);
    if !cols[r + 1..cols.len() - 1].iter().all(|c| c.ends_with(HIDDEN)) {
        return Err("state columns must end in _hidden".into());
    }
    Ok(Layout {
        obs,
        actions: r - action - 1,
        states,
    })
}

pub fn read_trajectory<R: std::io::Read>(input: R) -> Result<Trajectory, String> {
    let mut rd = csv::Reader::from_reader(input);
    let h = rd.headers().map_err(|e| e.to_string())?.clone();
    let l = layout(&h)?;
    let cols: Vec<String> = h.iter().map(String::from).collect();
    let strip = |c: &String, suffix: &str| c.strip_suffix(suffix).unwrap_or(c).to_string();
    let a0 = 2 + 2 * l.obs;
    let s0 = a0 + 1 + l.actions + 1;
    let mut t = Trajectory {
        episode: 0,
        observation_names: cols[2..2 + l.obs].to_vec(),
        action_names: cols[a0 + 1..a0 + 1 + l.actions].to_vec(),
        state_names: cols[s0..s0 + l.states].iter().map(|c| strip(c, HIDDEN)).collect(),
        steps: Vec::new(),
        terminated: false,
    };
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let bad = |what: &str| format!("row {}: bad {what}", line + 2);
        let f = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(&cols[i]));
        let flag = |i: usize| match &rec[i] {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(bad(&cols[i])),
        };
        t.episode = rec[0].parse().map_err(|_| bad("episode"))?;
        let step = TrajectoryStep {
            time: f(1)?,
            observation: (2..2 + l.obs).map(f).collect::<Result<_, _>>()?,
            present: (2 + l.obs..a0).map(flag).collect::<Result<_, _>>()?,
            action: rec[a0].parse().map_err(|_| bad("action"))?,
            action_values: (a0 + 1..a0 + 1 + l.actions).map(f).collect::<Result<_, _>>()?,
            reward: f(a0 + 1 + l.actions)?,
            state: (s0..s0 + l.states).map(f).collect::<Result<_, _>>()?,
        };
        t.terminated = flag(rec.len() - 1)?;
        t.steps.push(step);
    }
    Ok(t)
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory, IoError> {
    let file = std::fs::File::open(path).map_err(|e| IoError::at(path, e))?;
    read_trajectory(std::io::BufReader::new(file)).map_err(|e| IoError::Format(format!("{}: {e}", path.display())))
}

/// Plot table for one episode: time, each observation, the action values,
/// reward, and the state variables the agent cannot see.
pub fn plot_columns(t: &Trajectory) -> (Vec<String>, Vec<Vec<f64>>) {
    let hidden: Vec<usize> = (0..t.state_names.len())
        .filter(|&i| !t.observation_names.contains(&t.state_names[i]))
        .collect();
    let mut cols = vec!["t".to_string()];
    cols.extend(t.observation_names.iter().cloned());
    cols.extend(t.action_names.iter().cloned());
    cols.push("r".into());
    cols.extend(hidden.iter().map(|&i| format!("{}{HIDDEN}", t.state_names[i])));
    let rows = t
        .steps
        .iter()
        .map(|s| {
            let mut row = vec![s.time];
            row.extend(&s.observation);
            row.extend(&s.action_values);
            row.push(s.reward);
            row.extend(hidden.iter().map(|&i| s.state[i]));
            row
        })
        .collect();
    (cols, rows)
}

/// Pointwise mean over episodes at each step index, with the number of
/// episodes still running there. All trajectories must share columns.
pub fn cohort_mean(trajectories: &[Trajectory]) -> Result<(Vec<String>, Vec<Vec<f64>>), String> {
    let Some(first) = trajectories.first() else {
        return Err("no trajectories to average".into());
    };
    let (mut cols, _) = plot_columns(first);
    let tables: Vec<Vec<Vec<f64>>> = trajectories
        .iter()
        .map(|t| {
            let (c, rows) = plot_columns(t);
            if c == cols {
                Ok(rows)
            } else {
                Err(format!("episode {} has different columns", t.episode))
            }
        })
        .collect::<Result<_, _>>()?;
    let longest = tables.iter().map(Vec::len).max().unwrap_or(0);
    let width = cols.len();
    let mut out = Vec::with_capacity(longest);
    for k in 0..longest {
        let live: Vec<&Vec<f64>> = tables.iter().filter_map(|t| t.get(k)).collect();
        let mut row: Vec<f64> = (0..width)
            .map(|j| live.iter().map(|r| r[j]).sum::<f64>() / live.len() as f64)
            .collect();
        row.push(live.len() as f64);
        out.push(row);
    }
    cols.push("count".into());
    Ok((cols, out))
}

pub fn write_table(path: &Path, columns: &[String], rows: &[Vec<f64>]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| IoError::csv(path, e))?;
    w.write_record(columns).map_err(|e| IoError::csv(path, e))?;
    for r in rows {
        w.write_record(r.iter().copied().map(float)).map_err(|e| IoError::csv(path, e))?;
    }
    w.flush().map_err(|e| IoError::at(path, e))
}

pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), IoError> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| IoError::csv(path, e))?;
    let cols = rd.headers().map_err(|e| IoError::csv(path, e))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| IoError::csv(path, e))?;
        let row = rec
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| IoError::Format(format!("{}: {e}", path.display())))?;
        rows.push(row);
    }
    Ok((cols, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn blank() -> Trajectory {
        Trajectory {
            episode: 0,
            observation_names: vec!["T".into(), "I".into(), "B".into()],
            action_names: vec!["u".into()],
            state_names: vec!["N".into(), "T".into(), "I".into(), "B".into()],
            steps: Vec::new(),
            terminated: false,
        }
    }

    fn to_string(t: &Trajectory) -> String {
        let mut buf = Vec::new();
        write_trajectory(t, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn empty_trajectory_is_header_only() {
        let text = to_string(&blank());
        assert_eq!(text, "episode,t,T,I,B,T_present,I_present,B_present,action,u,r,N_hidden,T_hidden,I_hidden,B_hidden,terminated\n");
        assert_eq!(read_trajectory(text.as_bytes()).unwrap(), blank());
    }

    #[test]
    fn plot_columns_keep_unobserved_state() {
        let mut t = blank();
        t.steps.push(TrajectoryStep {
            time: 0.0,
            observation: vec![0.25, 0.15, 0.0],
            present: vec![true; 3],
            action: 4,
            action_values: vec![1.0],
            reward: 0.5,
            state: vec![1.0, 0.25, 0.15, 0.0],
        });
        let (cols, rows) = plot_columns(&t);
        assert_eq!(cols, ["t", "T", "I", "B", "u", "r", "N_hidden"]);
        assert_eq!(rows, vec![vec![0.0, 0.25, 0.15, 0.0, 1.0, 0.5, 1.0]]);
    }

    #[test]
    fn malformed_header_rejected() {
        assert!(read_trajectory("a,b\n1,2\n".as_bytes()).is_err());
        assert!(read_trajectory("episode,t,T,action,u,r,terminated\n".as_bytes()).is_err());
    }

    prop_compose! {
        fn any_step()(obs in prop::collection::vec(any::<f64>(), 3), present in prop::collection::vec(any::<bool>(), 3),
                      action in 0usize..5, u in any::<f64>(), r in any::<f64>(), state in prop::collection::vec(any::<f64>(), 4),
                      time in 0.0f64..100.0) -> TrajectoryStep {
            TrajectoryStep { time, observation: obs, present, action, action_values: vec![u], reward: r, state }
        }
    }

    proptest! {
        #[test]
        fn random_trajectory_round_trips(steps in prop::collection::vec(any_step(), 10), episode in any::<u64>(), terminated in any::<bool>()) {
            prop_assume!(steps.iter().all(|s| s.observation.iter().chain(&s.state).chain([&s.reward, &s.action_values[0]]).all(|x| !x.is_nan())));
            let t = Trajectory { episode, steps, terminated, ..blank() };
            prop_assert_eq!(read_trajectory(to_string(&t).as_bytes()).unwrap(), t);
        }
    }

    #[test]
    fn cohort_mean_is_pointwise() {
        let step = |x: f64| TrajectoryStep {
            time: 0.0,
            observation: vec![x; 3],
            present: vec![true; 3],
            action: 0,
            action_values: vec![x],
            reward: x,
            state: vec![x; 4],
        };
        let a = Trajectory { steps: vec![step(1.0), step(2.0)], ..blank() };
        let b = Trajectory { steps: vec![step(3.0)], ..blank() };
        let (cols, rows) = cohort_mean(&[a, b]).unwrap();
        assert_eq!(cols.last().unwrap(), "count");
        assert_eq!(rows[0], vec![0.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0]);
        assert_eq!(rows[1], vec![0.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0, 1.0]);
    }
}
