// Fetch wrappers over the service's read and token APIs. Session auth is a
// cookie set by /api/login; the browser carries it automatically.

import type { CurvesPayload, StudySummary, TokenRow, TrialRow } from './types.js';

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

async function request<T>(path: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(path, { credentials: 'same-origin', ...init });
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      detail = String((await resp.json()).detail);
    } catch {
      // keep statusText
    }
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

export function login(password: string): Promise<{ ok: boolean }> {
  return request('/api/login', {
    method: 'POST',
    headers: { 'content-type': 'application/json' },
    body: JSON.stringify({ password }),
  });
}

export function listStudies(): Promise<{ studies: StudySummary[] }> {
  return request('/api/studies');
}

export function getStudy(id: string): Promise<StudySummary> {
  return request(`/api/studies/${id}`);
}

export function listTrials(id: string): Promise<{ trials: TrialRow[] }> {
  return request(`/api/studies/${id}/trials`);
}

export function getCurves(id: string): Promise<CurvesPayload> {
  return request(`/api/studies/${id}/curves`);
}

export function listTokens(): Promise<{ tokens: TokenRow[] }> {
  return request('/api/tokens');
}

export function createToken(
  validitySeconds: number,
): Promise<{ token_id: string; token: string }> {
  return request('/api/tokens', {
    method: 'POST',
    headers: { 'content-type': 'application/json' },
    body: JSON.stringify({ validity_seconds: validitySeconds }),
  });
}

export function revokeToken(tokenId: string): Promise<{ ok: boolean }> {
  return request(`/api/tokens/${tokenId}`, { method: 'DELETE' });
}
