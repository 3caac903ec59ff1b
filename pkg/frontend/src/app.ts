// DOM wiring for the curator workflow: pick an anchor, watch training,
// review ranked candidates with a live threshold slider, accept/reject,
// and inspect the stats panel. All state lives in this class; rendering
// is plain DOM with the charts injected as inline SVG.

import { ApiClient, ApiError, CandidatesPayload, DecisionRecord, StatsPayload, pollJob } from './api.js';
import { calibrationSvg, histogramSvg } from './charts.js';
import { clampDelta, isClone, nearestCalibrationRow } from './threshold.js';

const TOP_K = 9; // nine ranked cards plus the single least-similar one

interface PendingDecision {
  candidateId: number;
  action: 'accept' | 'reject' | 'unsure';
  delta: number;
}

export class App {
  private client: ApiClient;
  private root: HTMLElement;
  private page = 0;
  private anchorId: number | null = null;
  private payload: CandidatesPayload | null = null;
  private stats: StatsPayload | null = null;
  private delta = 0;
  private decided = new Map<number, DecisionRecord>();
  private pending: PendingDecision[] = [];

  constructor(root: HTMLElement, client = new ApiClient()) {
    this.root = root;
    this.client = client;
  }

  async start(): Promise<void> {
    await this.showBrowser();
  }

  private toast(message: string): void {
    const el = document.createElement('div');
    el.className = 'toast';
    el.textContent = message;
    document.body.appendChild(el);
    setTimeout(() => el.remove(), 4000);
  }

  // -- anchor browser ----------------------------------------------------

  private async showBrowser(): Promise<void> {
    let pageData;
    try {
      pageData = await this.client.corpusPage(this.page);
    } catch (err) {
      this.root.innerHTML = '<p class="error">service unreachable</p>';
      this.toast(String(err));
      return;
    }
    const pages = Math.ceil(pageData.total / pageData.page_size);
    this.root.innerHTML = `
      <h1>pick an anchor</h1>
      <div class="pager">
        <button id="prev" ${this.page === 0 ? 'disabled' : ''}>&larr;</button>
        <span>page ${this.page + 1} / ${pages}</span>
        <button id="next" ${this.page + 1 >= pages ? 'disabled' : ''}>&rarr;</button>
      </div>
      <div class="grid" id="grid"></div>`;
    const grid = this.root.querySelector('#grid')!;
    for (const item of pageData.items) {
      const cell = document.createElement('button');
      cell.className = 'cell';
      cell.innerHTML = `<img src="${item.thumbnail_url}" alt="${item.id}"/><span>${item.index}</span>`;
      cell.addEventListener('click', () => void this.trainAnchor(item.index));
      grid.appendChild(cell);
    }
    this.root.querySelector('#prev')!.addEventListener('click', () => {
      this.page -= 1;
      void this.showBrowser();
    });
    this.root.querySelector('#next')!.addEventListener('click', () => {
      this.page += 1;
      void this.showBrowser();
    });
  }

  // -- training ----------------------------------------------------------

  private async trainAnchor(anchorId: number): Promise<void> {
    this.root.innerHTML = `
      <h1>anchor ${anchorId}</h1>
      <progress id="bar" max="1" value="0"></progress>
      <p id="status">submitting…</p>`;
    const bar = this.root.querySelector<HTMLProgressElement>('#bar')!;
    const status = this.root.querySelector('#status')!;
    try {
      const job = await this.client.startTraining(anchorId);
      const done = await pollJob(this.client, job.job_id, (state) => {
        bar.max = Math.max(state.progress.total, 1);
        bar.value = state.progress.step;
        status.textContent = `${state.state} (${state.progress.step}/${state.progress.total})`;
      });
      if (done.state === 'failed') {
        this.toast(`training failed: ${done.error ?? 'unknown error'}`);
        await this.showBrowser();
        return;
      }
      await this.showReview(anchorId);
    } catch (err) {
      // deliberately no automatic retry of train posts
      this.toast(err instanceof ApiError ? err.message : String(err));
      await this.showBrowser();
    }
  }

  // -- candidate review ----------------------------------------------------

  private async showReview(anchorId: number): Promise<void> {
    this.anchorId = anchorId;
    this.delta = 0;
    this.decided.clear();
    try {
      [this.payload, this.stats] = await Promise.all([
        this.client.candidates(anchorId, TOP_K),
        this.client.stats(anchorId),
      ]);
      const history = await this.client.decisions(anchorId);
      for (const record of history.decisions) this.decided.set(record.candidate_id, record); // latest wins
    } catch (err) {
      this.toast(err instanceof ApiError ? err.message : String(err));
      await this.showBrowser();
      return;
    }
    this.renderReview();
  }

  private renderReview(): void {
    const payload = this.payload!;
    this.root.innerHTML = `
      <h1>anchor ${this.anchorId}
        <button id="back">back</button>
      </h1>
      <div class="slider-row">
        <label>threshold offset <span id="delta-label">${this.delta.toFixed(2)}</span></label>
        <input type="range" id="delta" min="-0.5" max="0.5" step="0.05" value="${this.delta}"/>
        <span id="preview"></span>
      </div>
      <div class="cards" id="cards"></div>
      <h2>least similar</h2>
      <div class="cards" id="least"></div>
      <h2>stats</h2>
      <div id="charts"></div>`;
    this.root.querySelector('#back')!.addEventListener('click', () => void this.showBrowser());
    const slider = this.root.querySelector<HTMLInputElement>('#delta')!;
    slider.addEventListener('input', () => {
      this.delta = clampDelta(Number(slider.value));
      this.root.querySelector('#delta-label')!.textContent = this.delta.toFixed(2);
      this.recolor();
    });
    const cardsEl = this.root.querySelector('#cards')!;
    for (const card of payload.candidates) cardsEl.appendChild(this.cardElement(card.candidate_id));
    this.root.querySelector('#least')!.appendChild(this.cardElement(payload.least_similar.candidate_id, true));
    this.recolor();
  }

  private cardElement(candidateId: number, least = false): HTMLElement {
    const payload = this.payload!;
    const card =
      payload.least_similar.candidate_id === candidateId
        ? payload.least_similar
        : payload.candidates.find((c) => c.candidate_id === candidateId)!;
    const el = document.createElement('div');
    el.className = 'card';
    el.dataset.candidate = String(candidateId);
    el.dataset.score = String(card.score);
    el.innerHTML = `
      <img src="${card.thumbnail_url}" alt="${card.id}"/>
      <div class="meta">#${candidateId} s=${card.score.toFixed(3)}</div>
      <div class="badges"></div>
      ${least ? '' : '<div class="actions"><button data-action="accept">accept</button><button data-action="reject">reject</button></div>'}`;
    for (const button of el.querySelectorAll<HTMLButtonElement>('button[data-action]')) {
      button.addEventListener('click', () =>
        void this.submitDecision({
          candidateId,
          action: button.dataset.action as 'accept' | 'reject',
          delta: this.delta,
        }),
      );
    }
    return el;
  }

  /** Recolor every card from cached scores; no server round-trips. */
  private recolor(): void {
    const payload = this.payload!;
    for (const el of this.root.querySelectorAll<HTMLElement>('.card')) {
      const score = Number(el.dataset.score);
      el.classList.toggle('clone', isClone(score, payload.tau, this.delta));
      const decided = this.decided.get(Number(el.dataset.candidate));
      const badges = el.querySelector('.badges')!;
      badges.textContent = decided ? `${decided.action} ✓` : '';
      if (this.pending.some((p) => p.candidateId === Number(el.dataset.candidate))) {
        badges.textContent = 'pending…';
      }
    }
    if (this.stats) {
      const row = nearestCalibrationRow(this.stats, this.delta);
      this.root.querySelector('#preview')!.textContent =
        `P ${row.precision.toFixed(3)} · R ${row.recall.toFixed(3)} · F1 ${row.f1.toFixed(3)}`;
      // charts re-render from cached stats; the slider never refetches
      this.root.querySelector('#charts')!.innerHTML =
        histogramSvg(this.stats, this.delta) + calibrationSvg(this.stats, this.delta);
    }
  }

  // -- decisions -----------------------------------------------------------

  private async submitDecision(decision: PendingDecision): Promise<void> {
    if (this.anchorId === null) return;
    try {
      const record = await this.client.decide(
        this.anchorId,
        decision.candidateId,
        decision.action,
        decision.delta,
      );
      this.decided.set(decision.candidateId, record);
      this.pending = this.pending.filter((p) => p.candidateId !== decision.candidateId);
    } catch (err) {
      // failed posts stay queued and visible until retried
      if (!this.pending.includes(decision)) this.pending.push(decision);
      this.toast(`decision failed, queued for retry: ${String(err)}`);
      setTimeout(() => void this.flushPending(), 2000);
    }
    this.recolor();
  }

  private async flushPending(): Promise<void> {
    const queue = [...this.pending];
    for (const decision of queue) await this.submitDecision(decision);
  }
}
