// Wire payloads from the service's read and token APIs.

export type TrialState = 'running' | 'completed' | 'pruned' | 'failed';

export interface StudySummary {
  study_id: string;
  name: string;
  fingerprint: string;
  direction: 'minimize' | 'maximize';
  created_at: string;
  trial_counter: number;
  counts: Record<TrialState, number>;
  best_objective: number | null;
  best_trial_index: number | null;
}

export interface CurveTrial {
  trial_id: string;
  trial_index: number;
  state: TrialState;
  objective: number | null;
  points: [number, number][];
}

export interface CurvesPayload {
  study_id: string;
  trials: CurveTrial[];
}

export interface TrialRow {
  trial_id: string;
  trial_index: number;
  state: TrialState;
  params: Record<string, number | string>;
  objective: number | null;
  opened_at: string;
  closed_at: string | null;
  n_steps: number;
}

export interface TokenRow {
  token_id: string;
  owner: string;
  issued_at: number;
  validity: number;
  revoked: boolean;
  expires_at: number;
}
