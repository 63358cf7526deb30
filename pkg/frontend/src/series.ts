// Pure mapping from the curves payload to renderable series.
// The dashboard never mutates values: the plotted point set must equal the
// payload point set exactly (checked by the snapshot test).

import type { CurvesPayload, CurveTrial, TrialState } from './types.js';

export const STATE_COLORS: Record<TrialState, string> = {
  running: '#1f77b4',
  completed: '#2ca02c',
  pruned: '#ff7f0e',
  failed: '#d62728',
};

export interface TrialSeries {
  trialId: string;
  trialIndex: number;
  state: TrialState;
  color: string;
  objective: number | null;
  points: [number, number][];
  // pruned trials are visually terminated at their last reported step
  endMarker: [number, number] | null;
}

export interface StudyView {
  studyId: string;
  series: TrialSeries[];
  // index of the best completed trial's series, for the best-so-far marker
  bestSeries: number | null;
}

export function buildSeries(
  payload: CurvesPayload,
  direction: 'minimize' | 'maximize',
): StudyView {
  const series = payload.trials
    .slice()
    .sort((a, b) => a.trial_index - b.trial_index)
    .map(trialSeries);

  let bestSeries: number | null = null;
  let best: number | null = null;
  series.forEach((s, i) => {
    if (s.state !== 'completed' || s.objective === null) return;
    const better =
      best === null ||
      (direction === 'minimize' ? s.objective < best : s.objective > best);
    if (better) {
      best = s.objective;
      bestSeries = i;
    }
  });
  return { studyId: payload.study_id, series, bestSeries };
}

function trialSeries(t: CurveTrial): TrialSeries {
  const points = t.points.map(([s, v]) => [s, v] as [number, number]);
  const last = points.length ? points[points.length - 1] : null;
  return {
    trialId: t.trial_id,
    trialIndex: t.trial_index,
    state: t.state,
    color: STATE_COLORS[t.state],
    objective: t.objective,
    points,
    endMarker: t.state === 'pruned' ? last : null,
  };
}

// Flat point set of a view, for render-fidelity checks.
export function allPoints(view: StudyView): [number, number][] {
  return view.series.flatMap((s) => s.points);
}
