// Operator console: login, study monitoring with a polling loop, token
// management. All view-state updates are serialized through the single
// poll timer; the dashboard issues no mutating call besides login and
// token create/revoke.

import * as api from './api.js';
import { dataExtent, seriesPath, scalePoint } from './chart.js';
import { buildSeries, type StudyView } from './series.js';
import { tokenView } from './tokens.js';
import type { StudySummary } from './types.js';

const POLL_INTERVAL_MS = Number(
  new URLSearchParams(location.search).get('poll') ?? '2000',
);

const $ = (id: string) => document.getElementById(id) as HTMLElement;

let pollTimer: number | null = null;
let currentStudy: string | null = null;

function setStale(stale: boolean, message = 'server unreachable, showing last data') {
  const banner = $('banner');
  banner.textContent = stale ? message : '';
  banner.style.display = stale ? 'block' : 'none';
}

function show(view: 'login' | 'studies' | 'study' | 'tokens') {
  for (const v of ['login', 'studies', 'study', 'tokens']) {
    $(`view-${v}`).style.display = v === view ? 'block' : 'none';
  }
}

// ---------------------------------------------------------------------------
// Login

function initLogin() {
  const form = $('login-form') as HTMLFormElement;
  form.addEventListener('submit', async (ev) => {
    ev.preventDefault();
    const password = (form.elements.namedItem('password') as HTMLInputElement).value;
    try {
      await api.login(password);
      $('login-error').textContent = '';
      await enterStudies();
    } catch (err) {
      $('login-error').textContent =
        err instanceof api.ApiError && err.status === 401
          ? 'wrong credential'
          : String(err);
    }
  });
}

function handleAuthFailure(err: unknown): boolean {
  if (err instanceof api.ApiError && err.status === 401) {
    stopPolling();
    show('login');
    return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Study list

async function enterStudies() {
  stopPolling();
  show('studies');
  await refreshStudies();
  startPolling(refreshStudies);
}

async function refreshStudies() {
  try {
    const { studies } = await api.listStudies();
    setStale(false);
    renderStudyList(studies);
  } catch (err) {
    if (!handleAuthFailure(err)) setStale(true);
  }
}

function renderStudyList(studies: StudySummary[]) {
  const tbody = $('studies-body');
  tbody.innerHTML = '';
  for (const s of studies) {
    const tr = document.createElement('tr');
    const best = s.best_objective === null ? '-' : s.best_objective.toPrecision(6);
    tr.innerHTML =
      `<td class="link">${escapeHtml(s.name)}</td>` +
      `<td>${s.direction}</td><td>${s.trial_counter}</td>` +
      `<td>${s.counts.completed}</td><td>${s.counts.pruned}</td>` +
      `<td>${s.counts.failed}</td><td>${best}</td>`;
    tr.addEventListener('click', () => enterStudy(s.study_id, s));
    tbody.appendChild(tr);
  }
}

// ---------------------------------------------------------------------------
// Study detail: loss-evolution plot + trial table

async function enterStudy(studyId: string, summary: StudySummary) {
  stopPolling();
  currentStudy = studyId;
  show('study');
  $('study-title').textContent = `${summary.name} (${summary.direction})`;
  $('chart').innerHTML = '<svg viewBox="0 0 720 320"></svg>';
  const refresh = () => refreshStudy(studyId, summary.direction);
  await refresh();
  startPolling(refresh);
}

async function refreshStudy(studyId: string, direction: 'minimize' | 'maximize') {
  if (currentStudy !== studyId) return;
  try {
    const [curves, { trials }] = await Promise.all([
      api.getCurves(studyId),
      api.listTrials(studyId),
    ]);
    setStale(false);
    updateChart(buildSeries(curves, direction));
    const tbody = $('trials-body');
    tbody.innerHTML = '';
    for (const t of trials) {
      const tr = document.createElement('tr');
      const objective = t.objective === null ? '-' : t.objective.toPrecision(6);
      tr.innerHTML =
        `<td>${t.trial_index}</td>` +
        `<td class="state-${t.state}">${t.state}</td>` +
        `<td>${escapeHtml(JSON.stringify(t.params))}</td>` +
        `<td>${objective}</td><td>${t.n_steps}</td>`;
      tbody.appendChild(tr);
    }
  } catch (err) {
    if (!handleAuthFailure(err)) setStale(true);
  }
}

// Update paths in place (new points append to existing series); only
// series that appeared since the last poll get new elements.
function updateChart(view: StudyView) {
  const host = $('chart');
  const svg = host.querySelector('svg');
  const extent = dataExtent(view);
  if (!svg || !extent) return;
  const opts = { width: 720, height: 320, margin: 40 };
  for (const s of view.series) {
    if (!s.points.length) continue;
    let path = svg.querySelector<SVGPathElement>(`path[data-trial="${s.trialId}"]`);
    if (!path) {
      path = document.createElementNS('http://www.w3.org/2000/svg', 'path');
      path.setAttribute('data-trial', s.trialId);
      path.setAttribute('fill', 'none');
      path.setAttribute('stroke-width', '1.5');
      svg.appendChild(path);
    }
    path.setAttribute('stroke', s.color);
    path.setAttribute('d', seriesPath(s, extent, opts));
    if (s.endMarker && !svg.querySelector(`circle[data-pruned="${s.trialId}"]`)) {
      const [cx, cy] = scalePoint(s.endMarker, extent, opts);
      const dot = document.createElementNS('http://www.w3.org/2000/svg', 'circle');
      dot.setAttribute('data-pruned', s.trialId);
      dot.setAttribute('cx', String(cx));
      dot.setAttribute('cy', String(cy));
      dot.setAttribute('r', '4');
      dot.setAttribute('fill', s.color);
      svg.appendChild(dot);
    }
  }
}

// ---------------------------------------------------------------------------
// Token console

async function enterTokens() {
  stopPolling();
  show('tokens');
  await refreshTokens();
  startPolling(refreshTokens);
}

async function refreshTokens() {
  try {
    const { tokens } = await api.listTokens();
    setStale(false);
    const tbody = $('tokens-body');
    tbody.innerHTML = '';
    for (const row of tokens) {
      const v = tokenView(row);
      const tr = document.createElement('tr');
      tr.innerHTML =
        `<td>${escapeHtml(v.tokenId)}</td><td>${escapeHtml(v.owner)}</td>` +
        `<td>${v.issuedAt.toISOString()}</td><td>${v.expiresAt.toISOString()}</td>` +
        `<td class="status-${v.status}">${v.status}</td>`;
      const td = document.createElement('td');
      if (v.status === 'active') {
        const btn = document.createElement('button');
        btn.textContent = 'revoke';
        btn.addEventListener('click', () => revoke(v.tokenId));
        td.appendChild(btn);
      }
      tr.appendChild(td);
      tbody.appendChild(tr);
    }
  } catch (err) {
    if (!handleAuthFailure(err)) setStale(true);
  }
}

async function revoke(tokenId: string) {
  if (!confirm(`Revoke token ${tokenId}? Workers using it will get 401.`)) return;
  try {
    await api.revokeToken(tokenId);
    await refreshTokens();
  } catch (err) {
    if (!handleAuthFailure(err)) {
      setStale(true, `revoke failed: ${String(err)}`);
    }
  }
}

function initTokenForm() {
  const form = $('token-form') as HTMLFormElement;
  form.addEventListener('submit', async (ev) => {
    ev.preventDefault();
    const input = form.elements.namedItem('validity') as HTMLInputElement;
    try {
      const created = await api.createToken(Number(input.value));
      // the secret is displayed exactly once, with a copy affordance
      const box = $('token-secret');
      box.style.display = 'block';
      box.innerHTML = '';
      const code = document.createElement('code');
      code.textContent = created.token;
      const copy = document.createElement('button');
      copy.textContent = 'copy';
      copy.addEventListener('click', () => navigator.clipboard.writeText(created.token));
      box.append('New token (shown once): ', code, ' ', copy);
      await refreshTokens();
    } catch (err) {
      if (!handleAuthFailure(err)) setStale(true, `create failed: ${String(err)}`);
    }
  });
}

// ---------------------------------------------------------------------------

function startPolling(fn: () => Promise<void>) {
  stopPolling();
  pollTimer = window.setInterval(fn, POLL_INTERVAL_MS);
}

function stopPolling() {
  if (pollTimer !== null) window.clearInterval(pollTimer);
  pollTimer = null;
  currentStudy = null;
}

function escapeHtml(s: string): string {
  return s.replace(/[&<>"']/g, (c) => `&#${c.charCodeAt(0)};`);
}

export function main() {
  initLogin();
  initTokenForm();
  $('nav-studies').addEventListener('click', () => void enterStudies());
  $('nav-tokens').addEventListener('click', () => void enterTokens());
  $('back-to-studies').addEventListener('click', () => void enterStudies());
  // probe the session: land on studies if already authenticated
  api
    .listStudies()
    .then(() => enterStudies())
    .catch(() => show('login'));
}

main();
